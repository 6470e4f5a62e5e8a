// bundle.hpp - per-sample attention/feature dumps and the JSONL sample manifest
//
// Bundle directory layout:
//   <bundle>/meta.json
//   <bundle>/block_<i>.avp.gten    [N_v x N_p] image-to-prompt attention of block i
//   <bundle>/block_<i>.avv.gten    [N_v x N_v] image-to-image attention of block i
//   <bundle>/feature.gten          [N_v x D]   features of block l' at timestep t'
// Additional (timestep, block) feature dumps for sweeps are listed in meta.json
// under "extra_features" with their file names.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "editground/grid.hpp"

namespace editground {

struct BlockAttention {
    int index = 0;
    Matrix<float> attn_vp;  // [N_v x N_p]
    Matrix<float> attn_vv;  // [N_v x N_v]
};

struct FeatureDump {
    int block = 0;
    int timestep = 0;
    Matrix<float> values;  // [N_v x D]
};

struct DumpBundle {
    GridShape grid;
    std::size_t n_prompt = 0;
    ImageSize image_size;
    int attention_timestep = 0;
    std::vector<BlockAttention> blocks;  // strictly increasing index
    FeatureDump feature;
    std::vector<FeatureDump> extra_features;
    // Named block-index sets ("shallow", "deep"); "all" is implicit.
    std::map<std::string, std::vector<int>> block_presets;
    // What the prompt columns contain, as recorded by the producer ("all", "content", ...).
    std::string prompt_tokens = "all";
    std::string model;

    std::size_t token_count() const { return grid.size(); }
};

/// Checks every bundle invariant; throws a validation error naming the first violation.
void validate_bundle(const DumpBundle& bundle);

DumpBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const DumpBundle& bundle, const std::filesystem::path& dir);

/// Feature dump for (timestep, block); either may be left unspecified.
/// Returns nullptr when no dump matches.
const FeatureDump* find_feature(const DumpBundle& bundle, std::optional<int> block, std::optional<int> timestep);

struct SampleManifest {
    std::string sample_id;
    std::string expression;
    std::filesystem::path bundle_path;
    std::optional<std::filesystem::path> gt_mask_path;
    ImageSize image_size;
};

/// One JSON object per line. Relative paths are resolved against `base_dir`.
std::vector<SampleManifest> parse_manifest(std::istream& source, const std::filesystem::path& base_dir = {});
std::vector<SampleManifest> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<SampleManifest>& entries, std::ostream& sink);

/// Loads the bundle referenced by a manifest entry and checks it against the entry's image size.
DumpBundle load_sample_bundle(const SampleManifest& entry);

}  // namespace editground

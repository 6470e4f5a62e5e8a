// synthetic.hpp - planted dump bundles with known ground truth
//
// A planted instance places one rectangular object (optionally a union of
// rectangles, plus optional same-looking distractors) on the token grid and
// synthesizes attention and features around it:
//   features   s_i * (mu_label + (noise / sqrt(D)) * g_i), g_i ~ N(0, I), s_i ~ U(0.5, 2)
//              mu_bg = u, mu_fg = cos(delta) u + sin(delta) v for random orthonormal u, v;
//              distractor tokens share mu_fg
//   attn_vp    row mass attn_snr * U(0.5, 1.5) on the attended object tokens (the first
//              ceil(rho * n) object tokens in row-major order), U(0.5, 1.5) elsewhere,
//              plus `hotspots` background tokens per block at attn_snr * U(0.5, 1);
//              each row is spread over the prompt columns with U(0.5, 1.5) weights
//   attn_vv    identity: I; uniform: all ones;
//              object-coherent: (exp(-d^2 / 2l^2) * (same region ? 1 : cross) + (same object ? link : 0))
//              * U(0.8, 1.2), with d the token distance
// All randomness comes from Philox4x32-10 keyed by the spec seed, one stream per quantity.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

#include "editground/bundle.hpp"
#include "editground/grid.hpp"

namespace editground {

struct TokenRect {
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    bool contains(std::size_t r, std::size_t c) const {
        return r >= row && r < row + height && c >= col && c < col + width;
    }
    bool operator==(const TokenRect&) const = default;
};

enum class AffinityMode : std::uint8_t { identity, object_coherent, uniform };

std::string to_string(AffinityMode m);
AffinityMode parse_affinity_mode(const std::string& text);

/// Extra feature dump at another (timestep, block) with its own cluster geometry.
struct FeatureVariant {
    int timestep = 0;
    int block = 0;
    double separation = std::numbers::pi;
    double noise = 0.1;
    bool operator==(const FeatureVariant&) const = default;
};

struct PlantSpec {
    GridShape grid{16, 16};
    ImageSize image_size{64, 64};
    std::size_t n_prompt = 8;
    std::size_t feature_dim = 32;
    std::vector<TokenRect> object;      // empty: one random rectangle drawn from the seed
    std::vector<TokenRect> distractor;  // fg-like features, no attention mass, not in gt
    double attn_snr = 10.0;
    double feat_separation = std::numbers::pi;  // angle between cluster means (radians)
    double feat_noise = 0.1;
    AffinityMode affinity = AffinityMode::object_coherent;
    double partial_coverage = 1.0;
    std::uint64_t seed = 0;

    std::size_t n_blocks = 4;
    std::size_t hotspots = 3;
    double affinity_length = 1.5;  // spatial kernel width in tokens
    double cross_affinity = 0.1;
    double object_link = 0.2;
    std::size_t min_object = 4;  // random rectangle side range, tokens
    std::size_t max_object = 9;
    int feature_block = 20;
    int feature_timestep = 0;
    std::vector<FeatureVariant> extra_features;
    std::string model = "synthetic";

    bool operator==(const PlantSpec&) const = default;
};

/// Config error when the spec is out of range or a shape leaves the grid.
void validate_plant_spec(const PlantSpec& spec);

struct PlantedSample {
    DumpBundle bundle;
    GroundTruthMask gt;
    TokenMask token_truth;  // object tokens
    std::vector<TokenRect> object;
    std::vector<std::size_t> attended;  // object tokens that received attention mass
};

PlantedSample generate(const PlantSpec& spec);

/// Pixel mask of token rectangles: pixel (y, x) belongs to token
/// (floor((y + 0.5) * N_h / H), floor((x + 0.5) * N_w / W)).
GroundTruthMask rasterize(const std::vector<TokenRect>& rects, GridShape grid, ImageSize image);

/// A list of seeds sharing one base spec.
struct PlantSuite {
    std::string name;
    PlantSpec base;
    std::vector<std::uint64_t> seeds;
};

PlantSuite read_plant_suite(const std::filesystem::path& path);
PlantSuite parse_plant_suite(std::istream& source);
std::string plant_suite_json(const PlantSuite& suite);

/// Writes `<out>/<sample_id>/` bundles, `<out>/masks/<sample_id>.pgm` and
/// `<out>/manifest.jsonl` (relative paths). Returns the manifest entries.
std::vector<SampleManifest> write_plant_suite(const PlantSuite& suite, const std::filesystem::path& out_dir);

}  // namespace editground

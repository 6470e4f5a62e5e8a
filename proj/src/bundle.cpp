#include "editground/bundle.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "editground/error.hpp"
#include "editground/tensor_io.hpp"
#include "json.hpp"

namespace editground {
namespace {

using nlohmann::json;

std::string block_file(int index, const char* kind) {
    return "block_" + std::to_string(index) + "." + kind + ".gten";
}

std::string feature_file(const FeatureDump& f) {
    return "feature_t" + std::to_string(f.timestep) + "_l" + std::to_string(f.block) + ".gten";
}

void check_matrix(const Matrix<float>& m, std::size_t rows, std::size_t cols, const std::string& what) {
    if (m.rows != rows || m.cols != cols)
        fail(ErrorKind::validation, what + " is " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                                        ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    if (m.data.size() != rows * cols) fail(ErrorKind::validation, what + " data length mismatch");
}

void check_nonnegative(const Matrix<float>& m, const std::string& what) {
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        float v = m.data[i];
        if (!std::isfinite(v)) fail(ErrorKind::numeric, what + " has a non-finite entry at " + std::to_string(i));
        if (v < 0.0f)
            fail(ErrorKind::validation, what + " has a negative entry at row " + std::to_string(i / m.cols) +
                                            ", column " + std::to_string(i % m.cols));
    }
}

void check_feature(const FeatureDump& f, std::size_t n_v, std::size_t dim, const std::string& what) {
    if (f.values.rows != n_v)
        fail(ErrorKind::validation, what + " has " + std::to_string(f.values.rows) + " rows, N_v is " +
                                        std::to_string(n_v));
    if (f.values.cols < 1 || f.values.data.size() != f.values.rows * f.values.cols)
        fail(ErrorKind::validation, what + " has an invalid shape");
    if (dim != 0 && f.values.cols != dim) fail(ErrorKind::validation, what + " channel count differs from feature.gten");
    for (float v : f.values.data)
        if (!std::isfinite(v)) fail(ErrorKind::numeric, what + " has a non-finite entry");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

ImageSize parse_size(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2)
        fail(ErrorKind::format, std::string("'") + key + "' must be a [height, width] pair");
    return {j[key][0].get<std::size_t>(), j[key][1].get<std::size_t>()};
}

}  // namespace

void validate_bundle(const DumpBundle& b) {
    const std::size_t n_v = b.grid.size();
    if (n_v == 0) fail(ErrorKind::validation, "token grid must be non-empty");
    if (b.n_prompt == 0) fail(ErrorKind::validation, "n_prompt must be >= 1");
    if (b.image_size.height < b.grid.rows || b.image_size.width < b.grid.cols)
        fail(ErrorKind::validation, "image size is smaller than the token grid");
    if (b.blocks.empty()) fail(ErrorKind::validation, "bundle has no attention blocks");
    for (std::size_t i = 0; i < b.blocks.size(); ++i) {
        const auto& blk = b.blocks[i];
        const std::string name = "block " + std::to_string(blk.index);
        if (i > 0 && blk.index <= b.blocks[i - 1].index)
            fail(ErrorKind::validation, "block indices must be strictly increasing (" +
                                            std::to_string(b.blocks[i - 1].index) + " then " +
                                            std::to_string(blk.index) + ")");
        if (blk.attn_vp.rows != n_v)
            fail(ErrorKind::validation, name + " attn_vp has " + std::to_string(blk.attn_vp.rows) +
                                            " rows but the grid has N_v = " + std::to_string(n_v) + " (N_v mismatch: " +
                                            std::to_string(blk.attn_vp.rows) + " != " + std::to_string(n_v) + ")");
        check_matrix(blk.attn_vp, n_v, b.n_prompt, name + " attn_vp");
        check_matrix(blk.attn_vv, n_v, n_v, name + " attn_vv");
        check_nonnegative(blk.attn_vp, name + " attn_vp");
        check_nonnegative(blk.attn_vv, name + " attn_vv");
    }
    check_feature(b.feature, n_v, 0, "feature");
    for (const auto& f : b.extra_features)
        check_feature(f, n_v, b.feature.values.cols,
                      "feature (t=" + std::to_string(f.timestep) + ", l=" + std::to_string(f.block) + ")");
    for (const auto& [name, indices] : b.block_presets) {
        for (int idx : indices) {
            bool found = false;
            for (const auto& blk : b.blocks) found = found || blk.index == idx;
            if (!found)
                fail(ErrorKind::validation, "preset '" + name + "' names missing block " + std::to_string(idx));
        }
    }
}

DumpBundle load_bundle(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in) fail(ErrorKind::io, "cannot open " + (dir / "meta.json").string());
    json meta;
    try {
        meta = json::parse(meta_in);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, (dir / "meta.json").string() + ": " + e.what());
    }

    DumpBundle b;
    try {
        auto grid = parse_size(meta, "grid");
        b.grid = {grid.height, grid.width};
        b.image_size = parse_size(meta, "image_size");
        b.n_prompt = meta.at("n_prompt").get<std::size_t>();
        b.attention_timestep = meta.value("attention_timestep", 0);
        b.prompt_tokens = meta.value("prompt_tokens", std::string("all"));
        b.model = meta.value("model", std::string());
        if (meta.contains("block_presets"))
            b.block_presets = meta["block_presets"].get<std::map<std::string, std::vector<int>>>();

        for (int idx : meta.at("blocks").get<std::vector<int>>()) {
            BlockAttention blk;
            blk.index = idx;
            blk.attn_vp = read_tensor_file(dir / block_file(idx, "avp")).to_matrix();
            blk.attn_vv = read_tensor_file(dir / block_file(idx, "avv")).to_matrix();
            b.blocks.push_back(std::move(blk));
        }
        const auto& fmeta = meta.at("feature");
        b.feature.block = fmeta.at("block").get<int>();
        b.feature.timestep = fmeta.value("timestep", 0);
        b.feature.values = read_tensor_file(dir / fmeta.value("file", std::string("feature.gten"))).to_matrix();
        if (meta.contains("extra_features")) {
            for (const auto& e : meta["extra_features"]) {
                FeatureDump f;
                f.block = e.at("block").get<int>();
                f.timestep = e.at("timestep").get<int>();
                f.values = read_tensor_file(dir / e.at("file").get<std::string>()).to_matrix();
                b.extra_features.push_back(std::move(f));
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::format, (dir / "meta.json").string() + ": " + e.what());
    }
    validate_bundle(b);
    return b;
}

void save_bundle(const DumpBundle& b, const std::filesystem::path& dir) {
    validate_bundle(b);
    std::filesystem::create_directories(dir);
    json meta;
    meta["format"] = "gten-bundle";
    meta["version"] = 1;
    meta["grid"] = {b.grid.rows, b.grid.cols};
    meta["image_size"] = {b.image_size.height, b.image_size.width};
    meta["n_prompt"] = b.n_prompt;
    meta["prompt_tokens"] = b.prompt_tokens;
    meta["attention_timestep"] = b.attention_timestep;
    meta["model"] = b.model;
    json blocks = json::array();
    for (const auto& blk : b.blocks) {
        blocks.push_back(blk.index);
        write_tensor_file(Tensor::from_matrix(blk.attn_vp), dir / block_file(blk.index, "avp"));
        write_tensor_file(Tensor::from_matrix(blk.attn_vv), dir / block_file(blk.index, "avv"));
    }
    meta["blocks"] = blocks;
    meta["block_presets"] = b.block_presets;
    meta["feature"] = {{"block", b.feature.block}, {"timestep", b.feature.timestep}, {"file", "feature.gten"}};
    write_tensor_file(Tensor::from_matrix(b.feature.values), dir / "feature.gten");
    json extras = json::array();
    for (const auto& f : b.extra_features) {
        extras.push_back({{"block", f.block}, {"timestep", f.timestep}, {"file", feature_file(f)}});
        write_tensor_file(Tensor::from_matrix(f.values), dir / feature_file(f));
    }
    meta["extra_features"] = extras;

    std::ofstream out(dir / "meta.json", std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
}

const FeatureDump* find_feature(const DumpBundle& b, std::optional<int> block, std::optional<int> timestep) {
    auto matches = [&](const FeatureDump& f) {
        return (!block || f.block == *block) && (!timestep || f.timestep == *timestep);
    };
    if (matches(b.feature)) return &b.feature;
    for (const auto& f : b.extra_features)
        if (matches(f)) return &f;
    return nullptr;
}

std::vector<SampleManifest> parse_manifest(std::istream& source, const std::filesystem::path& base_dir) {
    std::vector<SampleManifest> out;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "manifest line " + std::to_string(line_no);
        try {
            json j = json::parse(line);
            SampleManifest e;
            e.sample_id = j.at("sample_id").get<std::string>();
            e.expression = j.value("expression", std::string());
            e.bundle_path = resolve(base_dir, j.at("bundle_path").get<std::string>());
            if (j.contains("gt_mask_path") && !j["gt_mask_path"].is_null())
                e.gt_mask_path = resolve(base_dir, j["gt_mask_path"].get<std::string>());
            e.image_size = parse_size(j, "image_size");
            if (!seen.insert(e.sample_id).second)
                fail(ErrorKind::validation, where + ": duplicate sample_id '" + e.sample_id + "'");
            out.push_back(std::move(e));
        } catch (const json::exception& ex) {
            fail(ErrorKind::format, where + ": " + ex.what());
        }
    }
    return out;
}

std::vector<SampleManifest> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open manifest " + path.string());
    return parse_manifest(in, path.parent_path());
}

void write_manifest(const std::vector<SampleManifest>& entries, std::ostream& sink) {
    for (const auto& e : entries) {
        json j;
        j["sample_id"] = e.sample_id;
        j["expression"] = e.expression;
        j["bundle_path"] = e.bundle_path.generic_string();
        j["gt_mask_path"] = e.gt_mask_path ? json(e.gt_mask_path->generic_string()) : json(nullptr);
        j["image_size"] = {e.image_size.height, e.image_size.width};
        sink << j.dump() << '\n';
    }
}

DumpBundle load_sample_bundle(const SampleManifest& entry) {
    DumpBundle b = load_bundle(entry.bundle_path);
    if (b.image_size != entry.image_size)
        fail(ErrorKind::validation, "bundle image size does not match manifest for '" + entry.sample_id + "'");
    return b;
}

}  // namespace editground

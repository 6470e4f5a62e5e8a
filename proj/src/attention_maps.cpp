#include "editground/attention_maps.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "editground/error.hpp"

namespace editground {

SpatialMap minmax_normalize(std::span<const double> values, GridShape shape) {
    if (values.size() != shape.size()) fail(ErrorKind::validation, "map size does not match its grid");
    if (values.empty()) fail(ErrorKind::validation, "cannot normalize an empty map");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        if (!std::isfinite(v)) fail(ErrorKind::numeric, "map contains NaN or Inf");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    SpatialMap out(shape, 0.0f);
    if (hi == lo) return out;
    const double range = hi - lo;
    for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<float>((values[i] - lo) / range);
    return out;
}

SpatialMap minmax_normalize(const SpatialMap& map) {
    std::vector<double> v(map.values.begin(), map.values.end());
    return minmax_normalize(v, map.shape);
}

BlockSelection BlockSelection::parse(const std::string& text) {
    BlockSelection sel;
    if (text.empty()) fail(ErrorKind::config, "empty block selection");
    if (text.find_first_not_of("0123456789, ") != std::string::npos) {
        sel.preset = text;
        return sel;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove(item.begin(), item.end(), ' '), item.end());
        if (item.empty()) fail(ErrorKind::config, "malformed block list '" + text + "'");
        sel.indices.push_back(std::stoi(item));
    }
    if (sel.indices.empty()) fail(ErrorKind::config, "malformed block list '" + text + "'");
    sel.preset.clear();
    return sel;
}

std::string BlockSelection::to_string() const {
    if (indices.empty()) return preset;
    std::string s;
    for (std::size_t i = 0; i < indices.size(); ++i) s += (i ? "," : "") + std::to_string(indices[i]);
    return s;
}

std::vector<int> resolve_blocks(const DumpBundle& bundle, const BlockSelection& selection) {
    std::vector<int> wanted;
    if (!selection.indices.empty()) {
        wanted = selection.indices;
    } else if (selection.preset == "all") {
        for (const auto& b : bundle.blocks) wanted.push_back(b.index);
    } else {
        auto it = bundle.block_presets.find(selection.preset);
        if (it == bundle.block_presets.end())
            fail(ErrorKind::config, "bundle defines no block preset '" + selection.preset + "'");
        wanted = it->second;
    }
    std::vector<int> out;
    for (const auto& b : bundle.blocks)
        if (std::find(wanted.begin(), wanted.end(), b.index) != wanted.end()) out.push_back(b.index);
    for (int w : wanted)
        if (std::find(out.begin(), out.end(), w) == out.end())
            fail(ErrorKind::config, "selected block " + std::to_string(w) + " is not in the bundle");
    if (out.empty()) fail(ErrorKind::config, "block selection is empty");
    return out;
}

std::vector<float> transition_apply(const Matrix<float>& attn_vv, std::span<const float> v, double eps) {
    const std::size_t n = attn_vv.rows;
    if (attn_vv.cols != n || v.size() != n)
        fail(ErrorKind::validation, "transition_apply needs a square affinity matching the vector length");
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = attn_vv.row(i);
        double mass = 0.0, acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const float a = row[j];
            if (a < 0.0f)
                fail(ErrorKind::validation, "negative affinity at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
            mass += a;
            acc += static_cast<double>(a) * v[j];
        }
        // An all-zero row propagates 0.
        out[i] = mass + eps > 0.0 ? static_cast<float>(acc / (mass + eps)) : 0.0f;
    }
    return out;
}

std::vector<float> prompt_mass(const Matrix<float>& attn_vp) {
    std::vector<float> out(attn_vp.rows);
    for (std::size_t i = 0; i < attn_vp.rows; ++i) {
        double s = 0.0;
        for (float a : attn_vp.row(i)) s += a;
        out[i] = static_cast<float>(s);
    }
    return out;
}

namespace {

template <typename PerBlock>
SpatialMap aggregate(const DumpBundle& bundle, std::span<const int> block_indices, PerBlock&& contribution) {
    if (block_indices.empty()) fail(ErrorKind::config, "empty block selection");
    std::vector<double> total(bundle.token_count(), 0.0);
    // Sequential by bundle block order so the reduction is reproducible.
    std::size_t used = 0;
    for (const auto& blk : bundle.blocks) {
        if (std::find(block_indices.begin(), block_indices.end(), blk.index) == block_indices.end()) continue;
        const std::vector<float> c = contribution(blk);
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += c[i];
        ++used;
    }
    if (used != block_indices.size()) fail(ErrorKind::config, "block selection names blocks missing from the bundle");
    return minmax_normalize(total, bundle.grid);
}

}  // namespace

SpatialMap aggregate_cam(const DumpBundle& bundle, std::span<const int> block_indices) {
    return aggregate(bundle, block_indices, [](const BlockAttention& b) { return prompt_mass(b.attn_vp); });
}

SpatialMap aggregate_ram(const DumpBundle& bundle, std::span<const int> block_indices, double eps) {
    return aggregate(bundle, block_indices,
                     [eps](const BlockAttention& b) { return transition_apply(b.attn_vv, prompt_mass(b.attn_vp), eps); });
}

}  // namespace editground

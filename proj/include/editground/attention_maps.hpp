#pragma once

#include <span>
#include <string>
#include <vector>

#include "editground/bundle.hpp"
#include "editground/grid.hpp"

namespace editground {

inline constexpr double kDefaultTransitionEps = 1e-8;

/// (m - min) / (max - min); a constant map becomes all zeros.
/// Throws a numeric error on NaN/Inf.
SpatialMap minmax_normalize(std::span<const double> values, GridShape shape);
SpatialMap minmax_normalize(const SpatialMap& map);

/// Which blocks contribute to the attention maps: "all", a named preset from
/// the bundle's meta.json ("shallow", "deep"), or an explicit index list.
struct BlockSelection {
    std::string preset = "all";
    std::vector<int> indices;  // used when non-empty; overrides preset

    /// Accepts "all", "shallow", "deep", any other preset name, or "i,j,k".
    static BlockSelection parse(const std::string& text);
    std::string to_string() const;
};

/// Resolves a selection to block indices present in the bundle (in bundle order).
std::vector<int> resolve_blocks(const DumpBundle& bundle, const BlockSelection& selection);

/// T v where T = diag(A 1 + eps)^-1 A, evaluated row by row without forming T.
/// Accumulates in double; result rounded to float32.
std::vector<float> transition_apply(const Matrix<float>& attn_vv, std::span<const float> v,
                                    double eps = kDefaultTransitionEps);

/// attn_vp 1: attention mass each image token places on the prompt.
std::vector<float> prompt_mass(const Matrix<float>& attn_vp);

SpatialMap aggregate_cam(const DumpBundle& bundle, std::span<const int> block_indices);
SpatialMap aggregate_ram(const DumpBundle& bundle, std::span<const int> block_indices,
                         double eps = kDefaultTransitionEps);

}  // namespace editground

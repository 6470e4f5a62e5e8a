#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "editground/attention_maps.hpp"
#include "editground/bundle.hpp"
#include "editground/grid.hpp"

namespace editground {

inline constexpr double kDefaultTau = 0.8;
inline constexpr double kAblationThreshold = 0.5;

/// Strict `map > tau`. Repairs degenerate outcomes so both classes exist:
/// nothing above tau -> only the argmax token is set; everything above tau ->
/// the argmin token is cleared. Ties go to the smallest row-major index.
TokenMask binarize(const SpatialMap& map, double tau);

/// Per-token unit-norm features on the token grid, row-major [N_v x D].
struct NormalizedFeatureMap {
    GridShape grid;
    std::size_t channels = 0;
    std::vector<float> values;
    std::vector<std::uint8_t> zero_rows;  // 1 where the raw norm was < 1e-12
    std::size_t zero_count = 0;

    std::span<const float> at(std::size_t token) const { return {values.data() + token * channels, channels}; }
};

inline constexpr double kZeroNormThreshold = 1e-12;

NormalizedFeatureMap l2_normalize_features(const Matrix<float>& feature, GridShape grid);

/// Plain masked means (not re-normalized).
struct PrototypePair {
    std::vector<double> fg;
    std::vector<double> bg;
};

PrototypePair compute_prototypes(const NormalizedFeatureMap& features, const TokenMask& mask);

/// Source-coordinate lookup for one output axis under half-pixel-centre alignment:
/// x_s = (x_t + 0.5) * n_source / n_target - 0.5, clamped to [0, n_source - 1].
struct AxisTap {
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    double frac = 0.0;  // weight of i1
};

std::vector<AxisTap> bilinear_axis(std::size_t n_target, std::size_t n_source);

/// Channel-interleaved bilinear upsampling: `values` holds `channels` numbers per
/// source location (row-major). Output is target.size() x channels.
std::vector<double> upsample_bilinear(std::span<const double> values, GridShape source, std::size_t channels,
                                      ImageSize target);
Grid<double> upsample_bilinear(const Grid<double>& scalar, ImageSize target);

/// Token-resolution similarity grids, [2 x N_v]: row 0 is P_fg . f, row 1 is P_bg . f.
Matrix<double> token_similarities(const NormalizedFeatureMap& features, const PrototypePair& prototypes);

enum class UpsamplePath : std::uint8_t {
    similarity,    // dot at token resolution, upsample the two similarity grids
    full_feature,  // upsample all D channels, then dot per pixel
};

std::string to_string(UpsamplePath p);
UpsamplePath parse_upsample_path(const std::string& text);

/// 1 where the foreground similarity strictly exceeds the background similarity.
PixelMask classify(const NormalizedFeatureMap& features, const PrototypePair& prototypes, ImageSize target,
                   UpsamplePath path = UpsamplePath::similarity);

/// Which map the pipeline hands to the final mask.
enum class LocalizationMode : std::uint8_t {
    full,          // RAM proposal + prototype classification
    ram_binarize,  // RAM upsampled and thresholded (ablation)
    cam_binarize,  // CAM upsampled and thresholded (ablation)
};

std::string to_string(LocalizationMode m);
LocalizationMode parse_localization_mode(const std::string& text);

struct SegmentConfig {
    double tau = kDefaultTau;
    BlockSelection blocks;
    std::optional<int> feature_block;     // default: the bundle's primary feature dump
    std::optional<int> feature_timestep;  // default: the bundle's primary feature dump
    UpsamplePath upsample = UpsamplePath::similarity;
    double eps = kDefaultTransitionEps;
    LocalizationMode mode = LocalizationMode::full;
    double binarize_threshold = kAblationThreshold;
};

/// Bilinearly upsamples a [0,1] map to image size and keeps pixels strictly above `threshold`.
PixelMask binarize_upsampled(const SpatialMap& map, ImageSize target, double threshold);

struct SegmentResult {
    SpatialMap attention;  // RAM (or CAM in cam_binarize mode)
    TokenMask proposal;    // empty unless mode == full
    PrototypePair prototypes;
    std::size_t zero_feature_rows = 0;
    PixelMask mask;
};

SegmentResult segment_detailed(const DumpBundle& bundle, const SegmentConfig& config);
PixelMask segment(const DumpBundle& bundle, const SegmentConfig& config);

}  // namespace editground

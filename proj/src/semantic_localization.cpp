#include "editground/semantic_localization.hpp"

#include <algorithm>
#include <cmath>

#include "editground/error.hpp"

namespace editground {

TokenMask binarize(const SpatialMap& map, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) fail(ErrorKind::config, "tau must lie in (0, 1), got " + std::to_string(tau));
    if (map.values.empty()) fail(ErrorKind::validation, "cannot binarize an empty map");
    TokenMask mask(map.shape, 0);
    std::size_t ones = 0;
    std::size_t argmax = 0, argmin = 0;
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const float v = map.values[i];
        if (v > tau) {
            mask.values[i] = 1;
            ++ones;
        }
        if (v > map.values[argmax]) argmax = i;
        if (v < map.values[argmin]) argmin = i;
    }
    if (ones == 0) {
        mask.values[argmax] = 1;
    } else if (ones == mask.values.size()) {
        mask.values[argmin] = 0;
    }
    return mask;
}

NormalizedFeatureMap l2_normalize_features(const Matrix<float>& feature, GridShape grid) {
    if (feature.rows != grid.size())
        fail(ErrorKind::validation, "feature has " + std::to_string(feature.rows) + " rows for a grid of " +
                                        std::to_string(grid.size()) + " tokens");
    NormalizedFeatureMap out;
    out.grid = grid;
    out.channels = feature.cols;
    out.values.resize(feature.data.size());
    out.zero_rows.assign(feature.rows, 0);
    for (std::size_t i = 0; i < feature.rows; ++i) {
        const auto row = feature.row(i);
        double sq = 0.0;
        for (float v : row) {
            if (!std::isfinite(v)) fail(ErrorKind::numeric, "feature row " + std::to_string(i) + " is not finite");
            sq += static_cast<double>(v) * v;
        }
        const double norm = std::sqrt(sq);
        float* dst = out.values.data() + i * feature.cols;
        if (norm < kZeroNormThreshold) {
            std::fill(dst, dst + feature.cols, 0.0f);
            out.zero_rows[i] = 1;
            ++out.zero_count;
            continue;
        }
        for (std::size_t k = 0; k < feature.cols; ++k) dst[k] = static_cast<float>(row[k] / norm);
    }
    return out;
}

PrototypePair compute_prototypes(const NormalizedFeatureMap& f, const TokenMask& mask) {
    if (mask.shape != f.grid) fail(ErrorKind::validation, "mask grid does not match the feature grid");
    PrototypePair p{std::vector<double>(f.channels, 0.0), std::vector<double>(f.channels, 0.0)};
    std::size_t n_fg = 0, n_bg = 0;
    for (std::size_t t = 0; t < f.grid.size(); ++t) {
        auto& dst = mask.values[t] ? p.fg : p.bg;
        (mask.values[t] ? n_fg : n_bg)++;
        const auto v = f.at(t);
        for (std::size_t k = 0; k < f.channels; ++k) dst[k] += v[k];
    }
    if (n_fg == 0 || n_bg == 0) fail(ErrorKind::single_class, "prototype mask must contain both classes");
    for (auto& x : p.fg) x /= static_cast<double>(n_fg);
    for (auto& x : p.bg) x /= static_cast<double>(n_bg);
    return p;
}

std::vector<AxisTap> bilinear_axis(std::size_t n_target, std::size_t n_source) {
    std::vector<AxisTap> taps(n_target);
    const double scale = static_cast<double>(n_source) / static_cast<double>(n_target);
    const double last = static_cast<double>(n_source - 1);
    for (std::size_t x = 0; x < n_target; ++x) {
        double s = std::clamp((static_cast<double>(x) + 0.5) * scale - 0.5, 0.0, last);
        auto i0 = static_cast<std::size_t>(std::floor(s));
        taps[x] = {i0, std::min(i0 + 1, n_source - 1), s - static_cast<double>(i0)};
    }
    return taps;
}

namespace {

void check_upsample_target(GridShape source, ImageSize target) {
    if (source.size() == 0) fail(ErrorKind::validation, "cannot upsample an empty grid");
    if (target.height < source.rows || target.width < source.cols)
        fail(ErrorKind::config, "upsample target " + std::to_string(target.height) + "x" +
                                    std::to_string(target.width) + " is smaller than the source grid");
}

// Shared by every bilinear evaluation so both classification paths see the
// same weights and the same summation order.
inline double lerp2(double a, double b, double c, double d, double fx, double fy) {
    const double top = (1.0 - fx) * a + fx * b;
    const double bot = (1.0 - fx) * c + fx * d;
    return (1.0 - fy) * top + fy * bot;
}

}  // namespace

std::vector<double> upsample_bilinear(std::span<const double> values, GridShape source, std::size_t channels,
                                      ImageSize target) {
    check_upsample_target(source, target);
    if (values.size() != source.size() * channels) fail(ErrorKind::validation, "channel buffer size mismatch");
    const auto ys = bilinear_axis(target.height, source.rows);
    const auto xs = bilinear_axis(target.width, source.cols);
    std::vector<double> out(target.size() * channels);
    for (std::size_t y = 0; y < target.height; ++y) {
        const auto& ty = ys[y];
        for (std::size_t x = 0; x < target.width; ++x) {
            const auto& tx = xs[x];
            const double* a = values.data() + source.index(ty.i0, tx.i0) * channels;
            const double* b = values.data() + source.index(ty.i0, tx.i1) * channels;
            const double* c = values.data() + source.index(ty.i1, tx.i0) * channels;
            const double* d = values.data() + source.index(ty.i1, tx.i1) * channels;
            double* dst = out.data() + (y * target.width + x) * channels;
            for (std::size_t k = 0; k < channels; ++k) dst[k] = lerp2(a[k], b[k], c[k], d[k], tx.frac, ty.frac);
        }
    }
    return out;
}

Grid<double> upsample_bilinear(const Grid<double>& scalar, ImageSize target) {
    return Grid<double>(target.shape(), upsample_bilinear(scalar.values, scalar.shape, 1, target));
}

std::string to_string(UpsamplePath p) { return p == UpsamplePath::similarity ? "similarity" : "full"; }

UpsamplePath parse_upsample_path(const std::string& text) {
    if (text == "similarity") return UpsamplePath::similarity;
    if (text == "full" || text == "full-feature") return UpsamplePath::full_feature;
    fail(ErrorKind::config, "unknown upsample path '" + text + "'");
}

namespace {

double dot(std::span<const double> a, const double* b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double dot(std::span<const double> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * static_cast<double>(b[k]);
    return s;
}

}  // namespace

Matrix<double> token_similarities(const NormalizedFeatureMap& f, const PrototypePair& p) {
    if (p.fg.size() != f.channels || p.bg.size() != f.channels)
        fail(ErrorKind::validation, "prototype dimension does not match feature channels");
    Matrix<double> s(2, f.grid.size());
    for (std::size_t t = 0; t < f.grid.size(); ++t) {
        s(0, t) = dot(p.fg, f.at(t));
        s(1, t) = dot(p.bg, f.at(t));
    }
    return s;
}

PixelMask classify(const NormalizedFeatureMap& f, const PrototypePair& p, ImageSize target, UpsamplePath path) {
    if (p.fg.size() != f.channels || p.bg.size() != f.channels)
        fail(ErrorKind::validation, "prototype dimension " + std::to_string(p.fg.size()) +
                                        " does not match feature channels " + std::to_string(f.channels));
    check_upsample_target(f.grid, target);
    PixelMask mask(target.shape(), 0);

    if (path == UpsamplePath::similarity) {
        // Two channels per token: (s_fg, s_bg).
        std::vector<double> sims(f.grid.size() * 2);
        for (std::size_t t = 0; t < f.grid.size(); ++t) {
            sims[2 * t] = dot(p.fg, f.at(t));
            sims[2 * t + 1] = dot(p.bg, f.at(t));
        }
        const auto up = upsample_bilinear(sims, f.grid, 2, target);
        for (std::size_t i = 0; i < target.size(); ++i) mask.values[i] = up[2 * i] > up[2 * i + 1] ? 1 : 0;
        return mask;
    }

    std::vector<double> channels(f.values.begin(), f.values.end());
    const auto up = upsample_bilinear(channels, f.grid, f.channels, target);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double* v = up.data() + i * f.channels;
        mask.values[i] = dot(p.fg, v) > dot(p.bg, v) ? 1 : 0;
    }
    return mask;
}

std::string to_string(LocalizationMode m) {
    switch (m) {
        case LocalizationMode::full: return "full";
        case LocalizationMode::ram_binarize: return "ram-binarize";
        case LocalizationMode::cam_binarize: return "cam-binarize";
    }
    return "full";
}

LocalizationMode parse_localization_mode(const std::string& text) {
    if (text == "full") return LocalizationMode::full;
    if (text == "ram-binarize" || text == "ram") return LocalizationMode::ram_binarize;
    if (text == "cam-binarize" || text == "cam") return LocalizationMode::cam_binarize;
    fail(ErrorKind::config, "unknown localization mode '" + text + "'");
}

PixelMask binarize_upsampled(const SpatialMap& map, ImageSize target, double threshold) {
    Grid<double> src(map.shape, std::vector<double>(map.values.begin(), map.values.end()));
    const auto up = upsample_bilinear(src, target);
    PixelMask mask(target.shape(), 0);
    for (std::size_t i = 0; i < up.values.size(); ++i) mask.values[i] = up.values[i] > threshold ? 1 : 0;
    return mask;
}

SegmentResult segment_detailed(const DumpBundle& bundle, const SegmentConfig& config) {
    const auto blocks = resolve_blocks(bundle, config.blocks);
    SegmentResult r;
    if (config.mode == LocalizationMode::cam_binarize) {
        r.attention = aggregate_cam(bundle, blocks);
        r.mask = binarize_upsampled(r.attention, bundle.image_size, config.binarize_threshold);
        return r;
    }
    r.attention = aggregate_ram(bundle, blocks, config.eps);
    if (config.mode == LocalizationMode::ram_binarize) {
        r.mask = binarize_upsampled(r.attention, bundle.image_size, config.binarize_threshold);
        return r;
    }
    const FeatureDump* feature = find_feature(bundle, config.feature_block, config.feature_timestep);
    if (!feature) {
        fail(ErrorKind::config, "bundle has no feature dump for block " +
                                    (config.feature_block ? std::to_string(*config.feature_block) : "*") +
                                    " at timestep " +
                                    (config.feature_timestep ? std::to_string(*config.feature_timestep) : "*"));
    }
    r.proposal = binarize(r.attention, config.tau);
    const auto normalized = l2_normalize_features(feature->values, bundle.grid);
    r.zero_feature_rows = normalized.zero_count;
    r.prototypes = compute_prototypes(normalized, r.proposal);
    r.mask = classify(normalized, r.prototypes, bundle.image_size, config.upsample);
    return r;
}

PixelMask segment(const DumpBundle& bundle, const SegmentConfig& config) {
    return segment_detailed(bundle, config).mask;
}

}  // namespace editground

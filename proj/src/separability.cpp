#include "editground/separability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "editground/error.hpp"

namespace editground {
namespace {

// Overlap length between [a0, a1) and [b0, b1).
std::uint64_t overlap(std::uint64_t a0, std::uint64_t a1, std::uint64_t b0, std::uint64_t b1) {
    const auto lo = std::max(a0, b0), hi = std::min(a1, b1);
    return hi > lo ? hi - lo : 0;
}

}  // namespace

GridReduction mask_to_grid(const GroundTruthMask& gt, GridShape grid) {
    const std::uint64_t H = gt.shape.rows, W = gt.shape.cols;
    const std::uint64_t Nh = grid.rows, Nw = grid.cols;
    if (Nh == 0 || Nw == 0) fail(ErrorKind::validation, "token grid must be non-empty");
    if (H < Nh || W < Nw) fail(ErrorKind::validation, "ground-truth mask is smaller than the token grid");

    // Work in coordinates scaled by Nh (rows) and Nw (cols): cell i spans
    // [i*H, (i+1)*H) and pixel p spans [p*Nh, (p+1)*Nh). Cell area is H*W.
    GridReduction out{TokenMask(grid, 0), false};
    for (std::uint64_t i = 0; i < Nh; ++i) {
        const std::uint64_t c0 = i * H, c1 = (i + 1) * H;
        const std::uint64_t p_first = c0 / Nh, p_last = std::min(H - 1, (c1 - 1) / Nh);
        for (std::uint64_t j = 0; j < Nw; ++j) {
            const std::uint64_t d0 = j * W, d1 = (j + 1) * W;
            const std::uint64_t q_first = d0 / Nw, q_last = std::min(W - 1, (d1 - 1) / Nw);
            std::uint64_t fg_area = 0;
            for (std::uint64_t p = p_first; p <= p_last; ++p) {
                const std::uint64_t oy = overlap(c0, c1, p * Nh, (p + 1) * Nh);
                for (std::uint64_t q = q_first; q <= q_last; ++q)
                    if (gt.values[p * W + q]) fg_area += oy * overlap(d0, d1, q * Nw, (q + 1) * Nw);
            }
            out.mask.values[i * Nw + j] = 2 * fg_area > H * W ? 1 : 0;
        }
    }
    const std::size_t ones = count_ones(out.mask);
    out.single_class = ones == 0 || ones == out.mask.values.size();
    return out;
}

template <typename T>
ClassStats class_stats(const Matrix<T>& features, const TokenMask& mask) {
    if (mask.values.size() != features.rows)
        fail(ErrorKind::validation, "token mask has " + std::to_string(mask.values.size()) + " entries for " +
                                        std::to_string(features.rows) + " feature rows");
    const std::size_t dim = features.cols;
    ClassStats s;
    s.mean_fg.assign(dim, 0.0);
    s.mean_bg.assign(dim, 0.0);
    for (std::size_t i = 0; i < features.rows; ++i) {
        auto& mean = mask.values[i] ? s.mean_fg : s.mean_bg;
        (mask.values[i] ? s.count_fg : s.count_bg)++;
        const auto row = features.row(i);
        for (std::size_t k = 0; k < dim; ++k) mean[k] += static_cast<double>(row[k]);
    }
    if (s.count_fg == 0 || s.count_bg == 0) fail(ErrorKind::single_class, "class statistics need both classes");
    for (auto& v : s.mean_fg) v /= static_cast<double>(s.count_fg);
    for (auto& v : s.mean_bg) v /= static_cast<double>(s.count_bg);

    // Second pass against the finished means.
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto& mean = mask.values[i] ? s.mean_fg : s.mean_bg;
        const auto row = features.row(i);
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double d = static_cast<double>(row[k]) - mean[k];
            d2 += d * d;
        }
        (mask.values[i] ? s.var_fg : s.var_bg) += d2;
    }
    s.var_fg /= static_cast<double>(s.count_fg);
    s.var_bg /= static_cast<double>(s.count_bg);
    return s;
}

template ClassStats class_stats<float>(const Matrix<float>&, const TokenMask&);
template ClassStats class_stats<double>(const Matrix<double>&, const TokenMask&);

Matrix<float> l2_normalize_rows(const Matrix<float>& features) {
    Matrix<float> out(features.rows, features.cols);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto row = features.row(i);
        double sq = 0.0;
        for (float v : row) {
            if (!std::isfinite(v)) fail(ErrorKind::numeric, "feature row " + std::to_string(i) + " is not finite");
            sq += static_cast<double>(v) * v;
        }
        const double norm = std::sqrt(sq);
        if (norm < 1e-12) continue;
        auto dst = out.row(i);
        for (std::size_t k = 0; k < row.size(); ++k) dst[k] = static_cast<float>(row[k] / norm);
    }
    return out;
}

FisherScore fisher_score(const ClassStats& s) {
    double between = 0.0;
    for (std::size_t k = 0; k < s.mean_fg.size(); ++k) {
        const double d = s.mean_fg[k] - s.mean_bg[k];
        between += d * d;
    }
    if (between == 0.0) return {0.0, false};
    const double within = s.var_fg + s.var_bg;
    if (within == 0.0) return {std::numeric_limits<double>::infinity(), true};
    return {between / within, false};
}

SeparabilityRecord separability_record(const std::string& sample_id, int timestep, int block,
                                       const Matrix<float>& features, GridShape grid, const GroundTruthMask& gt,
                                       bool normalize) {
    SeparabilityRecord r{sample_id, timestep, block, {}, ""};
    if (features.rows != grid.size()) fail(ErrorKind::validation, "feature rows do not match the token grid");
    const auto reduced = mask_to_grid(gt, grid);
    if (reduced.single_class) {
        r.flag = "single-class";
        return r;
    }
    r.score = normalize ? fisher_score(class_stats(l2_normalize_rows(features), reduced.mask))
                        : fisher_score(class_stats(features, reduced.mask));
    if (r.score.infinite) r.flag = "infinite";
    return r;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) fail(ErrorKind::validation, "quantile of an empty set");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

BoxStats box_stats(const std::vector<SeparabilityRecord>& records) {
    BoxStats b;
    std::vector<double> values;
    for (const auto& r : records) {
        if (r.flag == "infinite") {
            ++b.infinite;
        } else if (!r.flag.empty()) {
            ++b.excluded;
        } else {
            values.push_back(r.score.value);
        }
    }
    b.count = values.size();
    if (values.empty()) return b;
    std::sort(values.begin(), values.end());
    b.min = values.front();
    b.max = values.back();
    b.q1 = quantile_sorted(values, 0.25);
    b.median = quantile_sorted(values, 0.5);
    b.q3 = quantile_sorted(values, 0.75);
    return b;
}

std::map<std::pair<int, int>, BoxStats> summarize_by_cell(const std::vector<SeparabilityRecord>& records) {
    std::map<std::pair<int, int>, std::vector<SeparabilityRecord>> cells;
    for (const auto& r : records) cells[{r.timestep, r.block}].push_back(r);
    std::map<std::pair<int, int>, BoxStats> out;
    for (const auto& [key, recs] : cells) out[key] = box_stats(recs);
    return out;
}

}  // namespace editground

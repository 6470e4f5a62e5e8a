#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "editground/grid.hpp"

namespace editground {

/// Ground-truth mask reduced to token resolution.
struct GridReduction {
    TokenMask mask;
    bool single_class = false;
};

/// Token (i, j) is foreground iff strictly more than half of its pixel cell
/// [i*H/N_h, (i+1)*H/N_h) x [j*W/N_w, (j+1)*W/N_w) is foreground. Partial pixels
/// count by overlap area; the test is carried out in exact integer arithmetic.
GridReduction mask_to_grid(const GroundTruthMask& gt, GridShape grid);

struct ClassStats {
    std::vector<double> mean_fg;
    std::vector<double> mean_bg;
    double var_fg = 0.0;  // mean squared distance to mean_fg
    double var_bg = 0.0;
    std::size_t count_fg = 0;
    std::size_t count_bg = 0;
};

/// Class means and isotropic variances of the rows of `features` split by the
/// token mask. Features are used as given (normalize first for the standard score).
template <typename T>
ClassStats class_stats(const Matrix<T>& features, const TokenMask& mask);

/// Row-wise L2 normalization; zero rows stay zero.
Matrix<float> l2_normalize_rows(const Matrix<float>& features);

struct FisherScore {
    double value = 0.0;
    bool infinite = false;  // both variances zero, means differ
};

FisherScore fisher_score(const ClassStats& stats);

struct SeparabilityRecord {
    std::string sample_id;
    int timestep = 0;
    int block = 0;
    FisherScore score;
    std::string flag;  // "", "single-class", "infinite", "absent", "error: ..."
};

/// J for one sample's feature dump against its ground truth.
SeparabilityRecord separability_record(const std::string& sample_id, int timestep, int block,
                                       const Matrix<float>& features, GridShape grid, const GroundTruthMask& gt,
                                       bool normalize = true);

struct BoxStats {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    std::size_t count = 0;     // finite scores summarized
    std::size_t infinite = 0;  // reported separately, not in the quantiles
    std::size_t excluded = 0;  // single-class, absent, or failed
    bool empty() const { return count == 0; }
};

/// Linear-interpolation quantile of sorted data (q in [0,1]).
double quantile_sorted(const std::vector<double>& sorted, double q);

BoxStats box_stats(const std::vector<SeparabilityRecord>& records);

/// Per (timestep, block) cell, in ascending key order.
std::map<std::pair<int, int>, BoxStats> summarize_by_cell(const std::vector<SeparabilityRecord>& records);

}  // namespace editground

// Independent reference implementations used only by tests. They share no code
// with the library paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "editground/grid.hpp"

namespace oracle {

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("editground_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Materializes T = D(A 1)^-1 A explicitly (double precision).
inline std::vector<double> explicit_transition(const editground::Matrix<float>& a, double eps) {
    const std::size_t n = a.rows;
    std::vector<double> t(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += a(i, j);
        for (std::size_t j = 0; j < n; ++j) t[i * n + j] = s + eps > 0 ? a(i, j) / (s + eps) : 0.0;
    }
    return t;
}

inline std::vector<double> dense_matvec(const std::vector<double>& m, const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += m[i * n + j] * v[j];
    return out;
}

/// Bilinear sample of a single-channel grid at target pixel (y, x), written
/// directly from the half-pixel coordinate mapping.
inline double bilinear_at(const std::vector<double>& g, std::size_t rows, std::size_t cols, std::size_t H,
                          std::size_t W, std::size_t y, std::size_t x) {
    auto src = [](std::size_t t, std::size_t n_t, std::size_t n_s) {
        double s = (t + 0.5) * static_cast<double>(n_s) / static_cast<double>(n_t) - 0.5;
        return std::min(std::max(s, 0.0), static_cast<double>(n_s - 1));
    };
    const double sy = src(y, H, rows), sx = src(x, W, cols);
    const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
    const std::size_t y1 = std::min(y0 + 1, rows - 1), x1 = std::min(x0 + 1, cols - 1);
    const double fy = sy - y0, fx = sx - x0;
    auto at = [&](std::size_t r, std::size_t c) { return g[r * cols + c]; };
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

/// Per-pixel classification by upsampling every feature channel, then comparing dot products.
inline editground::PixelMask brute_force_classify(const std::vector<float>& unit_features, std::size_t rows,
                                                  std::size_t cols, std::size_t dim, const std::vector<double>& fg,
                                                  const std::vector<double>& bg, std::size_t H, std::size_t W) {
    std::vector<std::vector<double>> channels(dim, std::vector<double>(rows * cols));
    for (std::size_t t = 0; t < rows * cols; ++t)
        for (std::size_t k = 0; k < dim; ++k) channels[k][t] = unit_features[t * dim + k];
    editground::PixelMask mask(editground::GridShape{H, W}, 0);
    std::vector<double> f(dim);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t k = 0; k < dim; ++k) f[k] = bilinear_at(channels[k], rows, cols, H, W, y, x);
            double sf = 0, sb = 0;
            for (std::size_t k = 0; k < dim; ++k) {
                sf += fg[k] * f[k];
                sb += bg[k] * f[k];
            }
            mask.values[y * W + x] = sf > sb;
        }
    return mask;
}

struct NaiveStats {
    double between = 0.0;  // ||mu_fg - mu_bg||^2
    double var_fg = 0.0;
    double var_bg = 0.0;
};

/// Gathers each class into its own list, then computes means and spreads.
template <typename T>
NaiveStats naive_two_pass(const editground::Matrix<T>& f, const std::vector<std::uint8_t>& labels) {
    std::vector<std::vector<double>> fg, bg;
    for (std::size_t i = 0; i < f.rows; ++i) {
        std::vector<double> row(f.cols);
        for (std::size_t k = 0; k < f.cols; ++k) row[k] = f(i, k);
        (labels[i] ? fg : bg).push_back(row);
    }
    auto mean_of = [&](const std::vector<std::vector<double>>& xs) {
        std::vector<double> m(f.cols, 0.0);
        for (const auto& x : xs)
            for (std::size_t k = 0; k < f.cols; ++k) m[k] += x[k] / static_cast<double>(xs.size());
        return m;
    };
    auto spread = [&](const std::vector<std::vector<double>>& xs, const std::vector<double>& m) {
        double s = 0.0;
        for (const auto& x : xs)
            for (std::size_t k = 0; k < f.cols; ++k) s += (x[k] - m[k]) * (x[k] - m[k]);
        return s / static_cast<double>(xs.size());
    };
    const auto mf = mean_of(fg), mb = mean_of(bg);
    NaiveStats s;
    for (std::size_t k = 0; k < f.cols; ++k) s.between += (mf[k] - mb[k]) * (mf[k] - mb[k]);
    s.var_fg = spread(fg, mf);
    s.var_bg = spread(bg, mb);
    return s;
}

inline editground::Matrix<float> random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, float lo,
                                               float hi) {
    std::uniform_real_distribution<float> dist(lo, hi);
    editground::Matrix<float> m(rows, cols);
    for (auto& v : m.data) v = dist(rng);
    return m;
}

}  // namespace oracle

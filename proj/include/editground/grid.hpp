#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace editground {

/// Token-grid or pixel-grid geometry. Flattening is row-major:
/// index = row * cols + col.
struct GridShape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    std::size_t index(std::size_t r, std::size_t c) const { return r * cols + c; }
    bool operator==(const GridShape&) const = default;
};

/// Image size in pixels (H, W).
struct ImageSize {
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const { return height * width; }
    GridShape shape() const { return {height, width}; }
    bool operator==(const ImageSize&) const = default;
};

template <typename T>
struct Grid {
    GridShape shape;
    std::vector<T> values;

    Grid() = default;
    explicit Grid(GridShape s, T fill = T{}) : shape(s), values(s.size(), fill) {}
    Grid(GridShape s, std::vector<T> v) : shape(s), values(std::move(v)) {}

    T& at(std::size_t r, std::size_t c) { return values[shape.index(r, c)]; }
    const T& at(std::size_t r, std::size_t c) const { return values[shape.index(r, c)]; }
    bool operator==(const Grid&) const = default;
};

/// Real-valued map over the token grid (CAM / RAM), values in [0,1] once normalized.
using SpatialMap = Grid<float>;

/// 0/1 masks. TokenMask lives on the token grid, PixelMask and GroundTruthMask on
/// the image grid.
using BinaryMask = Grid<std::uint8_t>;
using TokenMask = BinaryMask;
using PixelMask = BinaryMask;
using GroundTruthMask = BinaryMask;

/// Dense row-major matrix.
template <typename T>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<T> d) : rows(r), cols(c), data(std::move(d)) {}

    std::span<T> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const T> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    bool operator==(const Matrix&) const = default;
};

inline std::size_t count_ones(const BinaryMask& m) {
    std::size_t n = 0;
    for (auto v : m.values) n += v != 0;
    return n;
}

}  // namespace editground

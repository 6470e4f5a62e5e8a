// tensor_io.hpp - GTEN tensor container and binary PGM masks
//
// GTEN layout (all integers little-endian):
//   magic   4 bytes  "GTEN"
//   version u8       1
//   dtype   u8       0 = float32
//   rank    u8       1..4
//   dims    rank x u32
//   payload product(dims) x f32, row-major
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "editground/grid.hpp"

namespace editground {

enum class DType : std::uint8_t { float32 = 0 };

inline constexpr std::uint8_t kTensorVersion = 1;
inline constexpr std::size_t kMaxTensorRank = 4;

struct Tensor {
    DType dtype = DType::float32;
    std::vector<std::uint32_t> shape;
    std::vector<float> data;

    std::size_t element_count() const;

    /// Throws a validation error when the container invariants do not hold.
    void validate() const;

    /// Bitwise equality (distinguishes -0.0 from 0.0 and compares NaN payloads).
    bool bit_equal(const Tensor& other) const;

    static Tensor from_matrix(const Matrix<float>& m);
    Matrix<float> to_matrix() const;
};

std::size_t tensor_header_size(std::size_t rank);

/// Returns the number of bytes written.
std::size_t write_tensor(const Tensor& t, std::ostream& sink);
Tensor read_tensor(std::istream& source);

void write_tensor_file(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor_file(const std::filesystem::path& path);

// Binary PGM (P5, maxval 255). Reading maps >= 128 to 1; writing maps 1 to 255.
GroundTruthMask read_mask_pgm(std::istream& source);
GroundTruthMask read_mask_pgm(const std::filesystem::path& path);
void write_mask_pgm(const BinaryMask& mask, std::ostream& sink);
void write_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path);

/// 8-bit grayscale export of a [0,1] map: round(value * 255).
void write_heatmap_pgm(const SpatialMap& map, std::ostream& sink);
void write_heatmap_pgm(const SpatialMap& map, const std::filesystem::path& path);

/// Validation error unless the mask is exactly `expected`.
void check_mask_size(const BinaryMask& mask, ImageSize expected);

}  // namespace editground

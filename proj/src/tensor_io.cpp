#include "editground/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "editground/error.hpp"

namespace editground {
namespace {

constexpr std::array<char, 4> kMagic = {'G', 'T', 'E', 'N'};

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Reads up to n bytes; returns how many were available.
std::size_t read_some(std::istream& in, char* dst, std::size_t n) {
    in.read(dst, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount());
}

}  // namespace

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

void Tensor::validate() const {
    if (dtype != DType::float32) fail(ErrorKind::unsupported_dtype, "tensor dtype must be float32");
    if (shape.empty() || shape.size() > kMaxTensorRank)
        fail(ErrorKind::validation, "tensor rank must be in [1, 4], got " + std::to_string(shape.size()));
    for (auto d : shape)
        if (d < 1) fail(ErrorKind::validation, "tensor dimensions must be >= 1");
    if (element_count() != data.size())
        fail(ErrorKind::validation, "tensor shape product " + std::to_string(element_count()) +
                                        " does not match data length " + std::to_string(data.size()));
}

bool Tensor::bit_equal(const Tensor& other) const {
    if (dtype != other.dtype || shape != other.shape || data.size() != other.data.size()) return false;
    return data.empty() || std::memcmp(data.data(), other.data.data(), data.size() * sizeof(float)) == 0;
}

Tensor Tensor::from_matrix(const Matrix<float>& m) {
    Tensor t;
    t.shape = {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)};
    t.data = m.data;
    return t;
}

Matrix<float> Tensor::to_matrix() const {
    if (shape.size() != 2)
        fail(ErrorKind::validation, "expected a rank-2 tensor, got rank " + std::to_string(shape.size()));
    return Matrix<float>(shape[0], shape[1], data);
}

std::size_t tensor_header_size(std::size_t rank) { return 4 + 3 + 4 * rank; }

std::size_t write_tensor(const Tensor& t, std::ostream& sink) {
    t.validate();
    std::vector<char> bytes;
    bytes.reserve(tensor_header_size(t.shape.size()) + 4 * t.data.size());
    bytes.insert(bytes.end(), kMagic.begin(), kMagic.end());
    bytes.push_back(static_cast<char>(kTensorVersion));
    bytes.push_back(static_cast<char>(t.dtype));
    bytes.push_back(static_cast<char>(t.shape.size()));
    for (auto d : t.shape) put_u32(bytes, d);
    for (float v : t.data) put_u32(bytes, std::bit_cast<std::uint32_t>(v));

    const auto start = sink.tellp();
    sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!sink) {
        auto pos = sink.tellp();
        long long offset = (pos >= 0 && start >= 0) ? static_cast<long long>(pos - start) : -1;
        fail(ErrorKind::io, "tensor write failed at byte offset " + std::to_string(offset));
    }
    return bytes.size();
}

Tensor read_tensor(std::istream& source) {
    std::array<unsigned char, 7> head{};
    std::size_t got = read_some(source, reinterpret_cast<char*>(head.data()), head.size());
    if (got < 4 || std::memcmp(head.data(), kMagic.data(), 4) != 0) fail(ErrorKind::format, "bad GTEN magic");
    if (got < head.size())
        fail(ErrorKind::truncation, "header expects 7 bytes, only " + std::to_string(got) + " available");
    if (head[4] != kTensorVersion)
        fail(ErrorKind::format, "unsupported GTEN version " + std::to_string(head[4]));
    if (head[5] != static_cast<unsigned char>(DType::float32))
        fail(ErrorKind::unsupported_dtype, "unknown dtype code " + std::to_string(head[5]));
    const std::size_t rank = head[6];
    if (rank < 1 || rank > kMaxTensorRank) fail(ErrorKind::format, "rank " + std::to_string(rank) + " out of range");

    std::vector<unsigned char> dims(4 * rank);
    got = read_some(source, reinterpret_cast<char*>(dims.data()), dims.size());
    if (got < dims.size())
        fail(ErrorKind::truncation, "dimension block expects " + std::to_string(dims.size()) + " bytes, " +
                                        std::to_string(got) + " available");

    Tensor t;
    t.shape.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        t.shape[i] = get_u32(dims.data() + 4 * i);
        if (t.shape[i] == 0) fail(ErrorKind::format, "zero-sized dimension");
    }
    const std::size_t n = t.element_count();
    std::vector<unsigned char> payload(4 * n);
    got = read_some(source, reinterpret_cast<char*>(payload.data()), payload.size());
    if (got < payload.size())
        fail(ErrorKind::truncation, "payload expects " + std::to_string(payload.size()) + " bytes, " +
                                        std::to_string(got) + " available");
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(get_u32(payload.data() + 4 * i));
    return t;
}

void write_tensor_file(const Tensor& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    write_tensor(t, out);
}

Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    try {
        return read_tensor(in);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

std::size_t pgm_number(std::istream& in, const char* what) {
    std::string tok = pgm_token(in);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        fail(ErrorKind::format, std::string("invalid PGM ") + what + " '" + tok + "'");
    return std::stoul(tok);
}

void write_pgm_bytes(std::ostream& sink, GridShape shape, const std::vector<unsigned char>& pixels) {
    sink << "P5\n" << shape.cols << ' ' << shape.rows << "\n255\n";
    sink.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!sink) fail(ErrorKind::io, "PGM write failed");
}

}  // namespace

GroundTruthMask read_mask_pgm(std::istream& source) {
    if (pgm_token(source) != "P5") fail(ErrorKind::format, "not a binary PGM (expected P5)");
    const std::size_t width = pgm_number(source, "width");
    const std::size_t height = pgm_number(source, "height");
    const std::size_t maxval = pgm_number(source, "maxval");
    if (maxval != 255) fail(ErrorKind::format, "PGM maxval must be 255, got " + std::to_string(maxval));
    if (width == 0 || height == 0) fail(ErrorKind::format, "empty PGM");

    GroundTruthMask mask(GridShape{height, width});
    std::vector<unsigned char> pixels(mask.values.size());
    std::size_t got = read_some(source, reinterpret_cast<char*>(pixels.data()), pixels.size());
    if (got < pixels.size())
        fail(ErrorKind::truncation, "PGM raster expects " + std::to_string(pixels.size()) + " bytes, " +
                                        std::to_string(got) + " available");
    for (std::size_t i = 0; i < pixels.size(); ++i) mask.values[i] = pixels[i] >= 128 ? 1 : 0;
    return mask;
}

GroundTruthMask read_mask_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    return read_mask_pgm(in);
}

void write_mask_pgm(const BinaryMask& mask, std::ostream& sink) {
    std::vector<unsigned char> pixels(mask.values.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = mask.values[i] ? 255 : 0;
    write_pgm_bytes(sink, mask.shape, pixels);
}

void write_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    write_mask_pgm(mask, out);
}

void write_heatmap_pgm(const SpatialMap& map, std::ostream& sink) {
    std::vector<unsigned char> pixels(map.values.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        double v = std::clamp(static_cast<double>(map.values[i]), 0.0, 1.0);
        pixels[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    write_pgm_bytes(sink, map.shape, pixels);
}

void write_heatmap_pgm(const SpatialMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    write_heatmap_pgm(map, out);
}

void check_mask_size(const BinaryMask& mask, ImageSize expected) {
    if (mask.shape != expected.shape())
        fail(ErrorKind::validation, "mask is " + std::to_string(mask.shape.rows) + "x" +
                                        std::to_string(mask.shape.cols) + ", expected " +
                                        std::to_string(expected.height) + "x" + std::to_string(expected.width));
}

}  // namespace editground

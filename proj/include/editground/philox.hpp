// philox.hpp - Philox4x32-10 counter-based generator (Salmon et al., Random123)
//
// Fixtures are keyed by (seed, stream) so every random quantity in a planted
// instance can be regenerated independently and identically in any language:
//   key     = {seed & 0xffffffff, seed >> 32}
//   counter = {block & 0xffffffff, block >> 32, stream, 0}
// Each counter block yields four 32-bit words consumed in order.
#pragma once

#include <array>
#include <cstdint>

namespace editground {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key);

inline constexpr const char* kGeneratorId = "philox4x32-10";

class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint32_t stream);

    std::uint32_t next_u32();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [lo, hi] (inclusive), by rejection.
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
    /// Standard normal (Box-Muller, one output per pair of uniforms).
    double normal();

private:
    PhiloxKey key_;
    std::uint32_t stream_;
    std::uint64_t block_ = 0;
    PhiloxCounter buffer_{};
    unsigned used_ = 4;
};

}  // namespace editground

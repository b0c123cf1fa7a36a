#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "pfp/math.hpp"

namespace pfp::rng {

// Philox4x32-10 counter-based generator. Every draw is addressed by
// (seed, sample, stream, index), so parallel consumers get identical
// values regardless of thread scheduling.
namespace detail {

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline std::array<std::uint32_t, 4> philox_block(std::uint64_t seed, std::uint32_t sample,
                                                 std::uint32_t stream, std::uint64_t block) {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;

    std::uint32_t c0 = static_cast<std::uint32_t>(block);
    std::uint32_t c1 = static_cast<std::uint32_t>(block >> 32);
    std::uint32_t c2 = sample;
    std::uint32_t c3 = stream;
    std::uint32_t k0 = static_cast<std::uint32_t>(seed);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed >> 32);

    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kM0, c0, hi0, lo0);
        mulhilo(kM1, c2, hi1, lo1);
        const std::uint32_t n0 = hi1 ^ c1 ^ k0;
        const std::uint32_t n1 = lo1;
        const std::uint32_t n2 = hi0 ^ c3 ^ k1;
        const std::uint32_t n3 = lo0;
        c0 = n0;
        c1 = n1;
        c2 = n2;
        c3 = n3;
        k0 += kW0;
        k1 += kW1;
    }
    return {c0, c1, c2, c3};
}

inline double u01_open(std::uint32_t x) {
    // (0, 1]: safe as a log argument.
    return (static_cast<double>(x) + 1.0) * 0x1p-32;
}

inline double u01_halfopen(std::uint32_t x) { return static_cast<double>(x) * 0x1p-32; }

}  // namespace detail

// Four standard normals per block via two Box-Muller pairs.
inline std::array<double, 4> normal_block(std::uint64_t seed, std::uint32_t sample,
                                          std::uint32_t stream, std::uint64_t block) {
    const auto w = detail::philox_block(seed, sample, stream, block);
    std::array<double, 4> z;
    const double r0 = std::sqrt(-2.0 * std::log(detail::u01_open(w[0])));
    const double a0 = 2.0 * math::kPi * detail::u01_halfopen(w[1]);
    z[0] = r0 * std::cos(a0);
    z[1] = r0 * std::sin(a0);
    const double r1 = std::sqrt(-2.0 * std::log(detail::u01_open(w[2])));
    const double a1 = 2.0 * math::kPi * detail::u01_halfopen(w[3]);
    z[2] = r1 * std::cos(a1);
    z[3] = r1 * std::sin(a1);
    return z;
}

/// Standard normal draw number `index` of the (seed, sample, stream) sequence.
inline double normal_at(std::uint64_t seed, std::uint32_t sample, std::uint32_t stream,
                        std::uint64_t index) {
    return normal_block(seed, sample, stream, index >> 2)[index & 3];
}

/// Uniform double in [lo, hi), draw number `index`.
inline double uniform_at(std::uint64_t seed, std::uint32_t sample, std::uint32_t stream,
                         std::uint64_t index, double lo, double hi) {
    const auto w = detail::philox_block(seed, sample, stream, index >> 2);
    return lo + (hi - lo) * detail::u01_halfopen(w[index & 3]);
}

/// Uniform integer in [0, n), draw number `index` (multiply-shift, no modulo bias to
/// speak of for small n).
inline std::uint32_t uniform_index_at(std::uint64_t seed, std::uint32_t sample,
                                      std::uint32_t stream, std::uint64_t index,
                                      std::uint32_t n) {
    const auto w = detail::philox_block(seed, sample, stream, index >> 2);
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(w[index & 3]) * n) >> 32);
}

}  // namespace pfp::rng

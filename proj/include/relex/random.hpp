#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace relex {

using Rng = std::mt19937_64;

// The distribution helpers below avoid <random>'s distribution classes, whose
// output is implementation-defined, so that seeded runs are reproducible
// across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream for (master seed, stream id), e.g. one per explained node.
inline Rng derive_rng(std::uint64_t master, std::uint64_t stream) {
    return Rng(splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

/// Uniform in [0, 1).
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform in (0, 1).
inline double uniform_open01(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return x % n;
}

inline bool bernoulli(Rng& rng, double p) {
    return uniform01(rng) < p;
}

/// Standard Gumbel(0, 1) draw.
inline double gumbel(Rng& rng) {
    return -std::log(-std::log(uniform_open01(rng)));
}

inline double normal(Rng& rng) {
    // Box-Muller; one draw per call.
    const double u1 = uniform_open01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

} // namespace relex

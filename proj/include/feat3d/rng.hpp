#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace f3d {

// All randomness in the project flows through these helpers instead of
// std::*_distribution, whose output is implementation-defined. mt19937_64
// itself is fully specified by the standard, so seeded results are stable
// across standard libraries and platforms.
using Rng = std::mt19937_64;

// Uniform double in [0, 1) with 53 bits of entropy.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_double(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

// Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

// Standard normal via Box-Muller. Draws two uniforms per call; no cached
// state, so call sequences stay reproducible.
inline double normal_double(Rng& rng) {
    double u1 = uniform_unit(rng);
    while (u1 <= 0.0) u1 = uniform_unit(rng);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <typename T>
void shuffle_inplace(Rng& rng, std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace f3d

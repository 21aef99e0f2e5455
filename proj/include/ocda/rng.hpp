#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ocda {

// All randomness in the library flows through the helpers below so that every
// draw is reproducible bit-for-bit from a seed. std::mt19937_64's raw output
// sequence is specified by the standard; the distribution helpers here are
// explicit algorithms instead of std:: distributions (whose output is
// implementation-defined).

using RngEngine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream from a master seed and up to two stream tags.
inline RngEngine make_stream(std::uint64_t master, std::uint64_t tag_a, std::uint64_t tag_b = 0) {
    std::uint64_t s = splitmix64(master);
    s = splitmix64(s ^ splitmix64(tag_a ^ 0x517cc1b727220a95ULL));
    s = splitmix64(s ^ splitmix64(tag_b ^ 0x2545f4914f6cdd1dULL));
    return RngEngine(s);
}

/// Uniform integer in [0, n). Rejection sampling, unbiased.
inline std::uint64_t bounded(RngEngine& rng, std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
        std::uint64_t r = rng();
        if (r >= threshold) return r % n;
    }
}

/// Uniform double in [0, 1) with 53 random bits.
inline double unit_real(RngEngine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double uniform_real(RngEngine& rng, double lo, double hi) {
    return lo + (hi - lo) * unit_real(rng);
}

/// Standard normal via Box-Muller.
inline double gaussian(RngEngine& rng) {
    double u1 = unit_real(rng);
    double u2 = unit_real(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, RngEngine& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(bounded(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace ocda

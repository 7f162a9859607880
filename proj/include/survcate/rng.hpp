#pragma once

#include <cstdint>
#include <cmath>
#include <cstddef>
#include <random>

namespace survcate {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic child seed for stream `index` of `parent` (tree, fold, replicate).
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
    return mix_seed(mix_seed(parent) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

inline double uniform01(Rng& rng) {
    // 53 random bits -> [0, 1)
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller so streams are identical across standard libraries.
inline double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

}  // namespace survcate

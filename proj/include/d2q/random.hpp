#pragma once

#include <cstdint>
#include <random>

namespace d2q {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds from a run seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t index = 0) {
    return mix_seed(mix_seed(mix_seed(base) ^ stream) ^ index);
}

// Standard normal draw. std::normal_distribution caches its second value, so a
// fresh distribution per call keeps consumption independent of call history.
inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

}  // namespace d2q

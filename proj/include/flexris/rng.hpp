#pragma once

#include <cstdint>
#include <random>

namespace flexris {

using Rng = std::mt19937_64;

/// Independent stream for task `index` under a master `seed`. The same
/// (seed, index) pair always yields the same stream, so work can be split
/// across threads without changing results.
inline Rng substream(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return Rng(seq);
}

/// Uniform on [lo, hi]. Built from 53 random bits so the sequence does not
/// depend on the standard library's distribution implementation.
inline double uniform(Rng& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

/// Uniform integer on [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform(rng, 0.0, 1.0) * static_cast<double>(n)) % n;
}

}  // namespace flexris

#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace ptrlab {

using Rng = std::mt19937_64;

/// Independent named streams derived from one run seed, so that e.g. the
/// shuffle order does not depend on how many pseudo-targets were drawn.
enum class Stream : std::uint32_t {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Targets = 4,
    Augment = 5,
    Data = 6,
};

inline Rng make_rng(std::uint64_t seed, Stream stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return Rng(seq);
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng() % i]);
    return order;
}

} // namespace ptrlab

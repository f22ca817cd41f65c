#pragma once

#include <cstdint>
#include <random>

namespace dwidn {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed-splitting rule used everywhere a sub-stream is needed:
/// child = mix64(mix64(parent ^ mix64(stream)) + index). Streams keep
/// unrelated consumers (phantom geometry, noise, average selection,
/// training shuffles) statistically independent for the same parent seed.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream, std::uint64_t index = 0) noexcept
{
    return mix64(mix64(parent ^ mix64(stream)) + index);
}

namespace streams {
inline constexpr std::uint64_t phantom = 1;
inline constexpr std::uint64_t noise = 2;
inline constexpr std::uint64_t selection = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t shuffle = 5;
inline constexpr std::uint64_t augment = 6;
inline constexpr std::uint64_t case_seed = 7;
} // namespace streams

} // namespace dwidn

#pragma once

#include <cstdint>
#include <random>

namespace mpslam {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Deterministic random substream keyed by (seed, stream, step, id). Streams
/// for different keys are independent for practical purposes, so per-feature
/// work can run in any order (or in parallel) without changing results.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t step = 0,
                                 std::uint64_t id = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ splitmix64(stream));
    h = splitmix64(h ^ splitmix64(step));
    h = splitmix64(h ^ splitmix64(id));
    return std::mt19937_64(h);
}

// Stream tags.
inline constexpr std::uint64_t kStreamAgent = 1;
inline constexpr std::uint64_t kStreamFeature = 2;
inline constexpr std::uint64_t kStreamBirth = 3;
inline constexpr std::uint64_t kStreamResample = 4;
inline constexpr std::uint64_t kStreamInit = 5;
inline constexpr std::uint64_t kStreamSynth = 6;
inline constexpr std::uint64_t kStreamRun = 7;

}  // namespace mpslam

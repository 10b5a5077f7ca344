#pragma once

#include <cstdint>
#include <random>

namespace prefrank {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of an independent substream. Replicates and bootstrap draws each get
/// their own substream, so results never depend on execution order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return Rng(derive_seed(seed, stream, index));
}

// Stream tags.
inline constexpr std::uint64_t kStreamTheta = 0x7468657461ULL;
inline constexpr std::uint64_t kStreamSample = 0x73616d706cULL;
inline constexpr std::uint64_t kStreamSplit = 0x73706c6974ULL;
inline constexpr std::uint64_t kStreamBoot = 0x626f6f74ULL;
inline constexpr std::uint64_t kStreamRep = 0x726570ULL;
inline constexpr std::uint64_t kStreamSvd = 0x737664ULL;

}  // namespace prefrank

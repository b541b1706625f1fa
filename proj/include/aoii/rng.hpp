#pragma once

#include <cstdint>
#include <random>

namespace aoii {

/// SplitMix64 step, used to decorrelate seeds for per-sensor substreams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Engine for substream `stream` of a master seed. Substream 0 is the master
/// stream itself; sensors use streams 1..N.
inline std::mt19937_64 substream_engine(std::uint64_t master_seed, std::uint64_t stream) {
    return std::mt19937_64(splitmix64(master_seed ^ (stream * 0x9E3779B97F4A7C15ULL)));
}

/// Uniform draw in [0,1) with a fixed, implementation-independent mapping
/// (std::uniform_real_distribution is not reproducible across libraries).
inline double uniform01(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace aoii

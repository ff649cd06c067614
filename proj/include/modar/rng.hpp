#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace modar {

/// Derives an independent seed for a named substream: hash(seed, name).
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed ^ (h + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Substream for the index-th item (frame, window, ...) of a named stage.
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return substream_seed(substream_seed(seed, name) + index, "index");
}

using Rng = std::mt19937_64;

}  // namespace modar

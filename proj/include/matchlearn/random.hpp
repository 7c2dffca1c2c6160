#pragma once

#include <cstdint>
#include <random>

namespace matchlearn {

using Rng = std::mt19937_64;

/// Independent stream for replication `index` of a run seeded with `seed`.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index = 0) {
  return Rng(seed ^ index);
}

}  // namespace matchlearn

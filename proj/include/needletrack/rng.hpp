#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace needletrack {

using Rng = std::mt19937_64;

/// Seed for an independent named sub-stream of a root seed. Every random
/// consumer (dataset, init, dropout, split, shuffle) draws from its own
/// stream so one can be re-seeded without disturbing the others.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(root, stream, index));
}

}  // namespace needletrack

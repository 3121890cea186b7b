#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace prqa {

using Rng = std::mt19937_64;

// Stable sub-seed for a named pipeline stage ("ingest", "init", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

}  // namespace prqa

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace fedclean {

/// SplitMix64 finalizer. Used to derive independent RNG streams from one
/// master seed so results never depend on execution order.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derive a child seed from a parent seed and a path of stream tags,
/// e.g. derive_seed(seed, {round, client_id}).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept;

/// Stable 64-bit tag for a string (FNV-1a), for use in derive_seed paths.
std::uint64_t seed_tag(std::string_view name) noexcept;

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

}  // namespace fedclean

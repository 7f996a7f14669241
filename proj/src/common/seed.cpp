#include "fedclean/seed.hpp"

#include <string_view>

namespace fedclean {

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t v : path) {
    h = splitmix64(h ^ splitmix64(v + 0x632BE59BD9B4E019ULL));
  }
  return h;
}

std::uint64_t seed_tag(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace fedclean

#pragma once

#include <cstdint>

namespace fedclean {

/// Pins libtorch to a single intra-op thread and flushes denormals. Every
/// training entry point calls this; results are bit-reproducible only under
/// this configuration.
void configure_torch_runtime();

/// Reseeds torch's global CPU generator (parameter init, dropout, randn).
void seed_torch(std::uint64_t seed);

}  // namespace fedclean

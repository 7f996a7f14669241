#include "fedclean/torch_setup.hpp"

#include <torch/torch.h>

#include <mutex>

namespace fedclean {

void configure_torch_runtime() {
  static std::once_flag once;
  std::call_once(once, [] {
    torch::set_num_threads(1);
    at::globalContext().setFlushDenormal(true);
  });
}

void seed_torch(std::uint64_t seed) {
  // torch::manual_seed takes a uint64 but some kernels fold it to 63 bits.
  torch::manual_seed(seed & 0x7FFFFFFFFFFFFFFFULL);
}

}  // namespace fedclean

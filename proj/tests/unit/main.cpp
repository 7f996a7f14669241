#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest_torch.hpp"

#include "fedclean/torch_setup.hpp"

#include <spdlog/spdlog.h>

int main(int argc, char** argv) {
  fedclean::configure_torch_runtime();
  spdlog::set_level(spdlog::level::warn);
  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  return ctx.run();
}

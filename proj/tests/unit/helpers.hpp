#pragma once

#include <torch/torch.h>

#include "fedclean/datakit.hpp"

#include <filesystem>
#include <random>

namespace testutil {

// Random images with labels cycling through 0..C-1 (so every class is present
// once n >= C), origins 0..n-1.
inline fedclean::datakit::LabeledDataset toy_dataset(std::int64_t n, std::int64_t C = 10,
                                                     std::uint64_t seed = 1) {
  torch::manual_seed(seed);
  auto x = torch::rand({n, 28, 28});
  auto y = torch::arange(n, torch::kInt64).remainder(C);
  return fedclean::datakit::make_dataset(x, y, C);
}

// Class c is a bright square at a class-specific position plus a little noise:
// easy enough that a small CNN separates it within an epoch or two.
inline fedclean::datakit::LabeledDataset pattern_dataset(std::int64_t n, std::int64_t C, std::uint64_t seed) {
  torch::manual_seed(seed);
  auto x = torch::rand({n, 28, 28}) * 0.1;
  auto y = torch::arange(n, torch::kInt64).remainder(C);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto c = y[i].item<std::int64_t>();
    const auto r = (c % 3) * 9;
    const auto col = (c / 3) * 9;
    x[i].slice(0, r, r + 8).slice(1, col, col + 8).fill_(0.9);
  }
  return fedclean::datakit::make_dataset(x.clamp(0, 1), y, C);
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("fedclean-test-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline bool tensors_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.scalar_type() == b.scalar_type() && torch::equal(a, b);
}

}  // namespace testutil

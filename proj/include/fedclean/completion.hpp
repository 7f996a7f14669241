#pragma once

// Synthesis of missing-class samples from the global generator.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "fedclean/datakit.hpp"
#include "fedclean/models.hpp"

namespace fedclean::completion {

class CompletionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthesisRequest {
  std::vector<std::int64_t> missing;
  std::int64_t samples_per_class = 1;
  std::uint64_t seed = 0;
};

/// (x + 1) / 2: generator range [-1, 1] to feature range [0, 1].
torch::Tensor to_unit_range(const torch::Tensor& raw);

/// s samples per missing class, classes in the order given, labelled and
/// tagged with the synthetic origin.
datakit::LabeledDataset generate_missing(models::Generator& generator, const SynthesisRequest& req);

/// Concatenation followed by a seeded shuffle. Original rows are copied
/// unchanged.
datakit::LabeledDataset complete_client(const datakit::LabeledDataset& ds,
                                        const datakit::LabeledDataset& synthetic, std::uint64_t seed);

/// Mean per-class count over the classes present in ds, rounded to nearest,
/// at least 1.
std::int64_t default_samples_per_class(const datakit::LabeledDataset& ds);

/// Writes a synthetic batch as IDX images/labels for inspection.
void export_synthetic(const datakit::LabeledDataset& synthetic, const std::filesystem::path& dir,
                      const std::string& stem);

}  // namespace fedclean::completion

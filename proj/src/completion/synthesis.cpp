#include "fedclean/completion.hpp"

#include "fedclean/seed.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>

namespace fedclean::completion {

torch::Tensor to_unit_range(const torch::Tensor& raw) { return (raw + 1.0) / 2.0; }

datakit::LabeledDataset generate_missing(models::Generator& generator, const SynthesisRequest& req) {
  if (req.missing.empty()) {
    throw CompletionError("no missing classes to synthesize");
  }
  if (req.samples_per_class <= 0) {
    throw CompletionError("samples_per_class must be positive");
  }
  const auto C = generator->spec.class_count;
  for (auto c : req.missing) {
    if (c < 0 || c >= C) {
      throw CompletionError("missing class " + std::to_string(c) + " out of range");
    }
  }
  const bool was_training = generator->is_training();
  generator->eval();
  torch::NoGradGuard no_grad;

  auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(req.seed, {seed_tag("synthesis")}) &
                                                      0x7FFFFFFFFFFFFFFFULL);
  std::vector<torch::Tensor> xs;
  std::vector<torch::Tensor> ys;
  for (auto c : req.missing) {
    const auto z = at::randn({req.samples_per_class, generator->spec.latent_dim}, gen);
    const auto y = torch::full({req.samples_per_class}, c, torch::kInt64);
    // clamp only guards float rounding at the tanh extremes
    xs.push_back(to_unit_range(generator->forward(z, y)).clamp(0.0, 1.0));
    ys.push_back(y);
  }
  generator->train(was_training);
  auto labels = torch::cat(ys);
  auto origin = torch::full({labels.size(0)}, datakit::kSyntheticOrigin, torch::kInt64);
  return datakit::make_dataset(torch::cat(xs), labels, C, origin);
}

datakit::LabeledDataset complete_client(const datakit::LabeledDataset& ds,
                                        const datakit::LabeledDataset& synthetic, std::uint64_t seed) {
  if (ds.class_count != synthetic.class_count) {
    throw CompletionError("class counts differ between client data and synthetic data");
  }
  if (synthetic.features.dim() != 3 || synthetic.features.sizes().slice(1) != ds.features.sizes().slice(1)) {
    throw CompletionError("synthetic feature shape does not match client data");
  }
  return datakit::shuffled(datakit::concat(ds, synthetic), derive_seed(seed, {seed_tag("complete")}));
}

std::int64_t default_samples_per_class(const datakit::LabeledDataset& ds) {
  const auto present = ds.present_classes();
  if (present.empty()) {
    return 1;
  }
  const double mean = static_cast<double>(ds.size()) / static_cast<double>(present.size());
  return std::max<std::int64_t>(1, std::llround(mean));
}

void export_synthetic(const datakit::LabeledDataset& synthetic, const std::filesystem::path& dir,
                      const std::string& stem) {
  std::filesystem::create_directories(dir);
  datakit::export_idx(synthetic, dir / (stem + "-images.idx"), dir / (stem + "-labels.idx"));
}

}  // namespace fedclean::completion

#include "fedclean/datakit.hpp"

#include "fedclean/seed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedclean::datakit {

namespace {
// 0.3 * 700 / 0.7 is 299.999... in binary; do not lose a sample to that.
constexpr double kFloorSlack = 1e-9;
}  // namespace

NoiseBudget noise_budget(double rho, std::int64_t valid_count, std::int64_t nonvalid_count) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw DatasetError("noise ratio must lie in [0, 1)");
  }
  NoiseBudget b;
  b.n_valid = valid_count;
  if (rho == 0.0) {
    return b;
  }
  const auto total = static_cast<double>(valid_count + nonvalid_count);
  if (rho <= static_cast<double>(nonvalid_count) / total) {
    b.n_noise = std::min<std::int64_t>(
        nonvalid_count, static_cast<std::int64_t>(
                            std::floor(rho * static_cast<double>(valid_count) / (1.0 - rho) + kFloorSlack)));
  } else {
    // Not enough noise feedstock: keep every non-valid image and shrink the
    // valid part instead.
    b.n_noise = nonvalid_count;
    const auto non = static_cast<double>(nonvalid_count);
    b.n_valid = std::min<std::int64_t>(valid_count,
                                       static_cast<std::int64_t>(std::floor(non / rho - non + kFloorSlack)));
    b.trimmed_valid = true;
  }
  return b;
}

LabeledDataset inject_noise(const LabeledDataset& valid, const LabeledDataset& nonvalid,
                            const NoiseSpec& spec) {
  if (!(spec.rho >= 0.0 && spec.rho < 1.0)) {
    throw DatasetError("noise ratio must lie in [0, 1)");
  }
  if (valid.class_count != nonvalid.class_count) {
    throw DatasetError("valid and non-valid sets disagree on class count");
  }
  const auto C = valid.class_count;
  if (static_cast<std::int64_t>(spec.missing.size()) >= C) {
    throw DatasetError("missing set must leave at least one class");
  }
  std::vector<bool> is_missing(static_cast<std::size_t>(C), false);
  for (auto c : spec.missing) {
    if (c < 0 || c >= C) {
      throw DatasetError("missing class " + std::to_string(c) + " out of range");
    }
    is_missing[static_cast<std::size_t>(c)] = true;
  }
  const auto y_valid = valid.label_vector();
  for (auto y : y_valid) {
    if (is_missing[static_cast<std::size_t>(y)]) {
      throw DatasetError("valid set contains a missing-class label");
    }
  }
  for (auto y : nonvalid.label_vector()) {
    if (!is_missing[static_cast<std::size_t>(y)]) {
      throw DatasetError("non-valid set contains a label outside the missing set");
    }
  }
  if (spec.rho == 0.0) {
    return valid;
  }
  if (nonvalid.empty()) {
    throw DatasetError("rho > 0 but the non-valid set is empty");
  }
  if (valid.empty()) {
    throw DatasetError("cannot sample noise labels from an empty valid set");
  }

  const auto budget = noise_budget(spec.rho, valid.size(), nonvalid.size());

  std::vector<std::int64_t> valid_idx(static_cast<std::size_t>(valid.size()));
  std::iota(valid_idx.begin(), valid_idx.end(), 0);
  if (budget.n_valid < valid.size()) {
    auto trim_rng = make_rng(derive_seed(spec.seed, {seed_tag("noise/trim")}));
    std::shuffle(valid_idx.begin(), valid_idx.end(), trim_rng);
    valid_idx.resize(static_cast<std::size_t>(budget.n_valid));
    std::sort(valid_idx.begin(), valid_idx.end());
  }
  auto kept = valid.subset(valid_idx);

  std::vector<std::int64_t> non_idx(static_cast<std::size_t>(nonvalid.size()));
  std::iota(non_idx.begin(), non_idx.end(), 0);
  auto pick_rng = make_rng(derive_seed(spec.seed, {seed_tag("noise/pick")}));
  std::shuffle(non_idx.begin(), non_idx.end(), pick_rng);
  non_idx.resize(static_cast<std::size_t>(budget.n_noise));
  auto noise = nonvalid.subset(non_idx);

  // Labels follow the empirical distribution of the full valid set.
  auto label_rng = make_rng(derive_seed(spec.seed, {seed_tag("noise/labels")}));
  std::uniform_int_distribution<std::size_t> draw(0, y_valid.size() - 1);
  std::vector<std::int64_t> fake(static_cast<std::size_t>(budget.n_noise));
  for (auto& y : fake) {
    y = y_valid[draw(label_rng)];
  }
  if (!fake.empty()) {
    noise.labels = torch::tensor(fake, torch::kInt64);
  }

  return shuffled(concat(kept, noise), derive_seed(spec.seed, {seed_tag("noise/order")}));
}

}  // namespace fedclean::datakit

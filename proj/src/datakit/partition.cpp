#include "fedclean/datakit.hpp"

#include "fedclean/seed.hpp"

#include <algorithm>
#include <numeric>

namespace fedclean::datakit {

ClientPartition partition_clients(const LabeledDataset& ds, std::int64_t num_clients,
                                  std::int64_t missing_per_client, std::uint64_t seed) {
  if (num_clients <= 0) {
    throw DatasetError("num_clients must be positive");
  }
  if (num_clients > ds.size()) {
    throw DatasetError("num_clients (" + std::to_string(num_clients) + ") exceeds dataset size (" +
                       std::to_string(ds.size()) + ")");
  }
  if (missing_per_client < 0 || missing_per_client >= ds.class_count) {
    throw DatasetError("missing_per_client must lie in [0, " + std::to_string(ds.class_count) + ")");
  }

  const auto n = ds.size();
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(derive_seed(seed, {seed_tag("partition/shuffle")}));
  std::shuffle(order.begin(), order.end(), rng);

  const auto labels = ds.label_vector();
  const auto base = n / num_clients;
  const auto extra = n % num_clients;

  ClientPartition out;
  out.seed = seed;
  std::int64_t cursor = 0;
  for (std::int64_t i = 0; i < num_clients; ++i) {
    const auto take = base + (i < extra ? 1 : 0);

    std::vector<std::int64_t> classes(static_cast<std::size_t>(ds.class_count));
    std::iota(classes.begin(), classes.end(), 0);
    auto crng = make_rng(derive_seed(seed, {seed_tag("partition/missing"), static_cast<std::uint64_t>(i)}));
    std::shuffle(classes.begin(), classes.end(), crng);
    std::vector<std::int64_t> missing(classes.begin(), classes.begin() + missing_per_client);
    std::sort(missing.begin(), missing.end());

    std::vector<bool> is_missing(static_cast<std::size_t>(ds.class_count), false);
    for (auto c : missing) {
      is_missing[static_cast<std::size_t>(c)] = true;
    }

    std::vector<std::int64_t> keep;
    std::vector<std::int64_t> reserve;
    for (std::int64_t j = cursor; j < cursor + take; ++j) {
      const auto idx = order[static_cast<std::size_t>(j)];
      (is_missing[static_cast<std::size_t>(labels[static_cast<std::size_t>(idx)])] ? reserve : keep)
          .push_back(idx);
    }
    cursor += take;

    out.client_datasets.push_back(ds.subset(keep));
    out.reserve_pools.push_back(ds.subset(reserve));
    out.missing_classes.push_back(std::move(missing));
  }
  return out;
}

}  // namespace fedclean::datakit

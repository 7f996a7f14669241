#include "fedclean/confidence.hpp"

#include "fedclean/seed.hpp"

#include <algorithm>
#include <numeric>

namespace fedclean::confidence {

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

nlohmann::json CleaningReport::to_json() const {
  return {{"threshold", threshold},
          {"input_count", input_count},
          {"retained_count", retained_indices.size()},
          {"relabeled_count", relabeled_count},
          {"fold_count", fold_count},
          {"per_metric_means",
           {{"entropy", mean_entropy},
            {"margin", mean_margin},
            {"cluster", mean_cluster},
            {"aggregate", mean_aggregate}}}};
}

std::vector<std::vector<std::int64_t>> stratified_folds(const std::vector<std::int64_t>& labels,
                                                        std::int64_t folds, std::uint64_t seed) {
  const auto n = static_cast<std::int64_t>(labels.size());
  if (folds < 2) {
    throw ConfidenceError("fold count must be at least 2");
  }
  if (folds > n) {
    throw ConfidenceError("fold count " + std::to_string(folds) + " exceeds sample count " +
                          std::to_string(n));
  }
  std::int64_t classes = 0;
  for (auto y : labels) {
    classes = std::max(classes, y + 1);
  }
  std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(classes));
  for (std::int64_t i = 0; i < n; ++i) {
    by_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  std::vector<std::vector<std::int64_t>> out(static_cast<std::size_t>(folds));
  std::int64_t dealt = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto rng = make_rng(derive_seed(seed, {seed_tag("folds"), c}));
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    for (auto idx : by_class[c]) {
      out[static_cast<std::size_t>(dealt++ % folds)].push_back(idx);
    }
  }
  for (auto& f : out) {
    std::sort(f.begin(), f.end());
  }
  return out;
}

CleaningResult clean_client_dataset(const datakit::LabeledDataset& ds,
                                    const models::ClassifierTrainer& trainer,
                                    const CleaningOptions& options, std::uint64_t seed) {
  const auto n = ds.size();
  if (options.folds > n) {
    throw ConfidenceError("fold count exceeds dataset size");
  }
  const auto cluster_k = options.cluster_k > 0 ? options.cluster_k : ds.class_count;
  const auto folds = stratified_folds(ds.label_vector(), options.folds, seed);

  CleaningResult result;
  auto& s = result.scores;
  s.entropy_conf.resize(static_cast<std::size_t>(n));
  s.margin_conf.resize(static_cast<std::size_t>(n));
  s.cluster_conf.resize(static_cast<std::size_t>(n));
  s.aggregate.resize(static_cast<std::size_t>(n));
  s.predicted_label.resize(static_cast<std::size_t>(n));
  result.fold_of.assign(static_cast<std::size_t>(n), -1);

  for (std::size_t k = 0; k < folds.size(); ++k) {
    const auto& held = folds[k];
    if (held.empty()) {
      throw ConfidenceError("fold " + std::to_string(k) + " is empty");
    }
    std::vector<std::int64_t> train_idx;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      if (j != k) {
        train_idx.insert(train_idx.end(), folds[j].begin(), folds[j].end());
      }
    }
    std::sort(train_idx.begin(), train_idx.end());

    auto model = trainer(ds.subset(train_idx), derive_seed(seed, {seed_tag("fold/train"), k}));
    const auto part = ds.subset(held);
    const auto probs = models::predict_proba(model, part.features);
    const auto fs = score_samples(part.features, probs, cluster_k,
                                  derive_seed(seed, {seed_tag("fold/kmeans"), k}));
    for (std::size_t r = 0; r < held.size(); ++r) {
      const auto i = static_cast<std::size_t>(held[r]);
      s.entropy_conf[i] = fs.entropy_conf[r];
      s.margin_conf[i] = fs.margin_conf[r];
      s.cluster_conf[i] = fs.cluster_conf[r];
      s.aggregate[i] = fs.aggregate[r];
      s.predicted_label[i] = fs.predicted_label[r];
      result.fold_of[i] = static_cast<std::int64_t>(k);
    }
  }

  auto& rep = result.report;
  rep.fold_count = options.folds;
  rep.input_count = n;
  rep.threshold = adaptive_threshold(s.aggregate);
  rep.retained_indices = retained_by_threshold(s.aggregate, rep.threshold);
  rep.mean_entropy = mean_of(s.entropy_conf);
  rep.mean_margin = mean_of(s.margin_conf);
  rep.mean_cluster = mean_of(s.cluster_conf);
  rep.mean_aggregate = mean_of(s.aggregate);

  const auto original = ds.label_vector();
  std::vector<std::int64_t> relabeled;
  relabeled.reserve(rep.retained_indices.size());
  for (auto i : rep.retained_indices) {
    const auto y = s.predicted_label[static_cast<std::size_t>(i)];
    relabeled.push_back(y);
    rep.relabeled_count += y != original[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  result.cleaned = ds.subset(rep.retained_indices);
  if (!relabeled.empty()) {
    result.cleaned.labels = torch::tensor(relabeled, torch::kInt64);
  }

  if (options.train_final_model && !result.cleaned.empty()) {
    result.final_model = trainer(result.cleaned, derive_seed(seed, {seed_tag("final")}));
  }
  return result;
}

}  // namespace fedclean::confidence

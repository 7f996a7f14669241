#include "fedclean/runner.hpp"

#include "fedclean/completion.hpp"
#include "fedclean/confidence.hpp"
#include "fedclean/seed.hpp"

#include <spdlog/spdlog.h>

#include <chrono>

namespace fedclean::runner {

namespace {

using datakit::LabeledDataset;

double label_agreement(const std::vector<LabeledDataset>& sets, const torch::Tensor& truth) {
  std::int64_t agree = 0;
  std::int64_t total = 0;
  for (const auto& ds : sets) {
    if (ds.empty()) {
      continue;
    }
    const auto real = ds.origin.ge(0);
    const auto origin = ds.origin.masked_select(real);
    const auto labels = ds.labels.masked_select(real);
    agree += truth.index_select(0, origin).eq(labels).sum().item<std::int64_t>();
    total += origin.numel();
  }
  return total == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(total);
}

bool touches_test(const LabeledDataset& ds) {
  return !ds.empty() && ds.origin.ge(datakit::kTestOriginBase).any().item<bool>();
}

std::vector<std::int64_t> sizes(const std::vector<LabeledDataset>& sets) {
  std::vector<std::int64_t> out;
  for (const auto& s : sets) {
    out.push_back(s.size());
  }
  return out;
}

}  // namespace

nlohmann::json StageLog::to_json() const {
  return {{"corrupted", corrupted},
          {"cleaned", cleaned},
          {"gan_trained", gan_trained},
          {"completed", completed},
          {"algorithm", algorithm},
          {"mu", mu},
          {"client_sizes_noisy", client_sizes_noisy},
          {"client_sizes_cleaned", client_sizes_cleaned},
          {"client_sizes_final", client_sizes_final},
          {"missing_classes", missing_classes},
          {"synthetic_classes", synthetic_classes},
          {"synthetic_counts", synthetic_counts},
          {"noisy_label_agreement", noisy_label_agreement},
          {"cleaned_label_agreement", cleaned_label_agreement},
          {"test_leak", test_leak},
          {"rounds_run", rounds_run}};
}

std::shared_ptr<const Splits> load_splits(const ExperimentConfig& cfg, datakit::DatasetId dataset) {
  auto s = std::make_shared<Splits>();
  s->train = datakit::load_dataset(dataset, datakit::Split::train, cfg.cache_dir());
  s->test = datakit::load_dataset(dataset, datakit::Split::test, cfg.cache_dir());
  return s;
}

struct CellData {
  ExperimentConfig cfg;
  CellKey key;
  std::uint64_t seed = 0;
  std::shared_ptr<const Splits> splits;

  bool prepared = false;
  std::vector<LabeledDataset> noisy;
  std::vector<std::vector<std::int64_t>> missing_sets;
  LabeledDataset validation;

  std::optional<std::vector<LabeledDataset>> cleaned;
  std::optional<std::vector<LabeledDataset>> completed;
  std::vector<std::vector<std::int64_t>> synthetic_classes;
  std::vector<std::int64_t> synthetic_counts;
  std::vector<fedcore::RoundLog> gan_rounds;

  void prepare() {
    if (prepared) {
      return;
    }
    if (!splits) {
      splits = load_splits(cfg, key.dataset);
    }
    const auto& train = splits->train;
    const auto pool = datakit::shuffled(train, derive_seed(seed, {seed_tag("pool")}));
    const auto n_clients = cfg.num_clients * cfg.samples_per_client;
    std::vector<std::int64_t> client_idx(static_cast<std::size_t>(n_clients));
    std::iota(client_idx.begin(), client_idx.end(), 0);
    std::vector<std::int64_t> val_idx(static_cast<std::size_t>(cfg.validation_size));
    std::iota(val_idx.begin(), val_idx.end(), n_clients);
    validation = pool.subset(val_idx);

    const auto part = datakit::partition_clients(pool.subset(client_idx), cfg.num_clients, key.missing,
                                                 derive_seed(seed, {seed_tag("partition")}));
    missing_sets = part.missing_classes;
    noisy.clear();
    for (std::size_t i = 0; i < part.client_datasets.size(); ++i) {
      datakit::NoiseSpec spec{key.noise, part.missing_classes[i], derive_seed(seed, {seed_tag("noise"), i})};
      noisy.push_back(datakit::inject_noise(part.client_datasets[i], part.reserve_pools[i], spec));
    }
    prepared = true;
  }

  const std::vector<LabeledDataset>& run_cleaning() {
    if (cleaned) {
      return *cleaned;
    }
    const auto trainer = fedcore::make_local_trainer(cfg.fed, cfg.cleaning_epochs);
    confidence::CleaningOptions opts;
    opts.folds = cfg.cleaning_folds;
    opts.cluster_k = cfg.cluster_k;
    opts.train_final_model = false;  // the federated stage trains its own model
    std::vector<LabeledDataset> out;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      if (noisy[i].size() < opts.folds) {
        spdlog::warn("client {} has {} samples, fewer than {} folds; left uncleaned", i, noisy[i].size(),
                     opts.folds);
        out.push_back(noisy[i]);
        continue;
      }
      auto res = confidence::clean_client_dataset(noisy[i], trainer, opts,
                                                  derive_seed(seed, {seed_tag("clean"), i}));
      spdlog::debug("client {}: kept {}/{} (relabeled {}, T={:.4f})", i, res.report.retained_indices.size(),
                    noisy[i].size(), res.report.relabeled_count, res.report.threshold);
      out.push_back(std::move(res.cleaned));
    }
    cleaned = std::move(out);
    return *cleaned;
  }

  const std::vector<LabeledDataset>& run_generation() {
    if (completed) {
      return *completed;
    }
    const auto& base = run_cleaning();
    auto gan = fedcore::federated_train_gan(base, cfg.gan, derive_seed(seed, {seed_tag("gan")}));
    gan_rounds = gan.logs;
    std::vector<LabeledDataset> out;
    synthetic_classes.assign(base.size(), {});
    synthetic_counts.assign(base.size(), 0);
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (missing_sets[i].empty()) {
        out.push_back(base[i]);
        continue;
      }
      completion::SynthesisRequest req;
      req.missing = missing_sets[i];
      req.samples_per_class = completion::default_samples_per_class(base[i]);
      req.seed = derive_seed(seed, {seed_tag("synthesize"), i});
      const auto syn = completion::generate_missing(gan.generator, req);
      synthetic_classes[i] = syn.present_classes();
      synthetic_counts[i] = syn.size();
      out.push_back(completion::complete_client(base[i], syn, derive_seed(seed, {seed_tag("complete"), i})));
    }
    completed = std::move(out);
    return *completed;
  }
};

CellContext::CellContext(const ExperimentConfig& cfg, datakit::DatasetId dataset, double noise,
                         std::int64_t missing, std::int64_t rep, std::shared_ptr<const Splits> splits)
    : data_(std::make_unique<CellData>()) {
  data_->cfg = cfg;
  data_->key = CellKey{dataset, Variant::CleanProx, noise, missing, rep};
  data_->seed = repetition_seed(cfg, dataset, rep);
  data_->splits = std::move(splits);
}

CellContext::~CellContext() = default;
CellContext::CellContext(CellContext&&) noexcept = default;
CellContext& CellContext::operator=(CellContext&&) noexcept = default;

std::uint64_t CellContext::seed() const { return data_->seed; }

CellResult CellContext::run(Variant variant) {
  auto& d = *data_;
  CellResult res;
  res.key = d.key;
  res.key.variant = variant;
  res.seed = d.seed;
  const auto flags = flags_of(variant);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    d.prepare();
    auto& st = res.stages;
    st.corrupted = d.key.noise > 0.0;
    st.missing_classes = d.missing_sets;
    st.client_sizes_noisy = sizes(d.noisy);
    st.noisy_label_agreement = label_agreement(d.noisy, d.splits->train.labels);

    const std::vector<LabeledDataset>* train_sets = &d.noisy;
    if (flags.clean) {
      train_sets = &d.run_cleaning();
      st.cleaned = true;
      st.client_sizes_cleaned = sizes(*train_sets);
      st.cleaned_label_agreement = label_agreement(*train_sets, d.splits->train.labels);
    }
    if (flags.generate) {
      train_sets = &d.run_generation();
      st.gan_trained = true;
      st.completed = true;
      st.synthetic_classes = d.synthetic_classes;
      st.synthetic_counts = d.synthetic_counts;
      res.gan_rounds = d.gan_rounds;
    }
    st.client_sizes_final = sizes(*train_sets);
    st.algorithm = fedcore::to_string(flags.algorithm);
    st.mu = flags.algorithm == fedcore::Algorithm::fedprox ? d.cfg.fed.mu : 0.0;

    st.test_leak = touches_test(d.validation);
    for (const auto& s : *train_sets) {
      st.test_leak = st.test_leak || touches_test(s);
    }
    if (st.test_leak) {
      throw std::logic_error("test-split sample found in training data");
    }

    auto fed = fedcore::federated_train_classifier(*train_sets, d.validation, d.cfg.fed, flags.algorithm,
                                                   derive_seed(d.seed, {seed_tag("federated")}));
    st.rounds_run = static_cast<std::int64_t>(fed.logs.size());
    res.rounds = std::move(fed.logs);

    const auto& test = d.splits->test;
    const auto pred = models::predict_labels(fed.model, test.features);
    const auto p = pred.contiguous();
    std::vector<std::int64_t> y_pred(p.data_ptr<std::int64_t>(), p.data_ptr<std::int64_t>() + p.numel());
    res.report = metrics::evaluate(test.label_vector(), y_pred, test.class_count);
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
    spdlog::error("cell {} {} noise={} missing={} rep={} failed: {}", datakit::to_string(d.key.dataset),
                  to_string(variant), d.key.noise, d.key.missing, d.key.rep, e.what());
  }
  res.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

CellResult run_cell(const ExperimentConfig& cfg, datakit::DatasetId dataset, Variant variant, double noise,
                    std::int64_t missing, std::int64_t rep) {
  CellContext ctx(cfg, dataset, noise, missing, rep);
  return ctx.run(variant);
}

}  // namespace fedclean::runner

#include "fedclean/fedcore.hpp"

#include "fedclean/seed.hpp"
#include "fedclean/torch_setup.hpp"

#include <cmath>
#include <numeric>

namespace fedclean::fedcore {

void FedConfig::validate() const {
  if (rounds < 1) {
    throw FedError("rounds must be at least 1");
  }
  if (mu < 0.0) {
    throw FedError("mu must be non-negative");
  }
  if (patience < 1) {
    throw FedError("patience must be at least 1");
  }
  if (tolerance < 0.0) {
    throw FedError("tolerance must be non-negative");
  }
  if (base_lr <= 0.0 || lr_decay_rate <= 0.0 || lr_decay_steps < 1) {
    throw FedError("invalid learning-rate schedule");
  }
  if (clip_norm <= 0.0) {
    throw FedError("clip_norm must be positive");
  }
  if (batch_size < 1 || local_epochs < 1) {
    throw FedError("batch_size and local_epochs must be at least 1");
  }
}

double FedConfig::learning_rate(std::int64_t step) const {
  return base_lr *
         std::pow(lr_decay_rate, static_cast<double>(step) / static_cast<double>(lr_decay_steps));
}

ClientRoundResult train_client_round(models::Classifier& model, const datakit::LabeledDataset& data,
                                     const models::ModelWeights& global_w, const FedConfig& cfg,
                                     std::uint64_t seed, std::int64_t step_offset) {
  cfg.validate();
  if (data.empty()) {
    throw FedError("train_client_round called with an empty dataset");
  }
  configure_torch_runtime();
  seed_torch(derive_seed(seed, {seed_tag("local/torch")}));
  models::set_weights(*model, global_w);
  model->train();

  auto params = model->parameters();
  torch::optim::Adam opt(params, torch::optim::AdamOptions(cfg.base_lr));
  auto rng = make_rng(derive_seed(seed, {seed_tag("local/batches")}));

  const auto n = data.size();
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  ClientRoundResult out;
  double loss_sum = 0.0;
  for (std::int64_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto perm = torch::tensor(order, torch::kInt64);
    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      const auto idx = perm.slice(0, start, std::min(n, start + cfg.batch_size));
      const auto x = data.features.index_select(0, idx);
      const auto y = data.labels.index_select(0, idx);

      const double lr = cfg.learning_rate(step_offset + out.steps);
      for (auto& group : opt.param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
      }
      opt.zero_grad();
      auto loss = torch::nn::functional::cross_entropy(model->forward(x), y);
      if (cfg.mu > 0.0) {
        loss = loss + proximal_term(*model, global_w, cfg.mu);
      }
      loss.backward();
      clip_global_norm(params, cfg.clip_norm);
      opt.step();

      loss_sum += loss.item<double>();
      ++out.steps;
    }
  }
  out.mean_loss = loss_sum / static_cast<double>(out.steps);
  out.weights = models::get_weights(*model);
  return out;
}

models::ClassifierTrainer make_local_trainer(const FedConfig& cfg, std::int64_t epochs) {
  auto local = cfg;
  local.mu = 0.0;
  local.local_epochs = epochs;
  local.validate();
  return [local](const datakit::LabeledDataset& data, std::uint64_t seed) {
    auto model = models::build_classifier({datakit::kImageSide, datakit::kImageSide, 1},
                                          data.class_count, derive_seed(seed, {seed_tag("init")}));
    train_client_round(model, data, models::get_weights(*model), local, seed);
    return model;
  };
}

double accuracy_on(models::Classifier& model, const datakit::LabeledDataset& data) {
  if (data.empty()) {
    return 0.0;
  }
  const auto pred = models::predict_labels(model, data.features);
  return pred.eq(data.labels).to(torch::kFloat64).mean().item<double>();
}

}  // namespace fedclean::fedcore

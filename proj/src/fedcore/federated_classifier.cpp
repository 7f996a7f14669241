#include "fedclean/fedcore.hpp"

#include "fedclean/seed.hpp"

#include <spdlog/spdlog.h>

namespace fedclean::fedcore {

FedClassifierResult federated_train_classifier(const std::vector<datakit::LabeledDataset>& clients,
                                               const datakit::LabeledDataset& validation,
                                               const FedConfig& cfg, Algorithm algorithm,
                                               std::uint64_t seed) {
  cfg.validate();
  auto local_cfg = cfg;
  local_cfg.mu = algorithm == Algorithm::fedavg ? 0.0 : cfg.mu;

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    if (!clients[i].empty()) {
      active.push_back(i);
    }
  }
  if (active.empty()) {
    throw FedError("every client dataset is empty");
  }
  const auto C = clients[active.front()].class_count;
  const std::array<std::int64_t, 3> shape{datakit::kImageSide, datakit::kImageSide, 1};

  FedClassifierResult out;
  out.model = models::build_classifier(shape, C, derive_seed(seed, {seed_tag("global/init")}));
  out.weights = models::get_weights(*out.model);
  auto local = models::build_classifier(shape, C, derive_seed(seed, {seed_tag("local/init")}));

  std::vector<std::int64_t> steps(clients.size(), 0);
  double best = 0.0;
  std::int64_t wait = 0;
  for (std::int64_t r = 0; r < cfg.rounds; ++r) {
    RoundLog log;
    log.round = r + 1;
    std::vector<models::ModelWeights> ws;
    std::vector<std::int64_t> counts;
    for (auto i : active) {
      const auto res = train_client_round(local, clients[i], out.weights, local_cfg,
                                          derive_seed(seed, {seed_tag("round"), static_cast<std::uint64_t>(r), i}),
                                          steps[i]);
      steps[i] += res.steps;
      ws.push_back(res.weights);
      counts.push_back(clients[i].size());
      log.client_ids.push_back(static_cast<std::int64_t>(i));
      log.client_loss.push_back(res.mean_loss);
      log.mean_loss += res.mean_loss / static_cast<double>(active.size());
    }
    out.weights = fedavg_aggregate(ws, counts);
    models::set_weights(*out.model, out.weights);

    const double acc = accuracy_on(out.model, validation);
    if (acc > best + cfg.tolerance) {
      best = acc;
      wait = 0;
    } else {
      ++wait;
    }
    log.val_accuracy = acc;
    log.best_accuracy = best;
    log.wait = wait;
    out.logs.push_back(std::move(log));
    spdlog::debug("{} round {}: val acc {:.4f} (best {:.4f}, wait {})", to_string(algorithm), r + 1,
                  acc, best, wait);
    if (wait >= cfg.patience) {
      out.early_stopped = true;
      break;
    }
  }
  out.model->eval();
  return out;
}

}  // namespace fedclean::fedcore

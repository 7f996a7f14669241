#pragma once

// Federated averaging, proximal local training and the two round loops
// (classifier with early stopping, conditional GAN).

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedclean/datakit.hpp"
#include "fedclean/models.hpp"

namespace fedclean::fedcore {

class FedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Algorithm { fedavg, fedprox };

std::string to_string(Algorithm a);

struct FedConfig {
  std::int64_t rounds = 10;
  double mu = 0.01;
  std::int64_t patience = 5;
  double tolerance = 0.001;
  double base_lr = 1e-3;
  double lr_decay_rate = 0.95;
  std::int64_t lr_decay_steps = 100;
  double clip_norm = 5.0;
  std::int64_t batch_size = 64;
  std::int64_t local_epochs = 1;

  void validate() const;
  /// base_lr * rate^(step / decay_steps)
  double learning_rate(std::int64_t step) const;
};

/// Sum_i (counts_i / N) * w_i, accumulated in float64.
models::ModelWeights fedavg_aggregate(const std::vector<models::ModelWeights>& weights,
                                      const std::vector<std::int64_t>& counts);

/// Plain mean over clients.
models::ModelWeights uniform_average(const std::vector<models::ModelWeights>& weights);

/// (mu / 2) * sum_j ||local_j - global_j||^2.
double proximal_penalty(const models::ModelWeights& local, const models::ModelWeights& global_w,
                        double mu);

/// Differentiable version over the module's trainable parameters. The anchor
/// holds the module's weights in get_weights order; only its leading
/// parameter entries are used (running statistics are not optimized).
torch::Tensor proximal_term(const torch::nn::Module& model, const models::ModelWeights& anchor,
                            double mu);

/// Rescales all gradients together so their joint L2 norm is at most max_norm.
void clip_global_norm(const std::vector<torch::Tensor>& params, double max_norm);

struct ClientRoundResult {
  double mean_loss = 0.0;
  models::ModelWeights weights;
  std::int64_t steps = 0;
};

/// Loads global_w into the model, then runs cfg.local_epochs of seeded
/// mini-batch Adam on cross-entropy + proximal_term(cfg.mu) anchored at
/// global_w. `step_offset` continues the learning-rate schedule across rounds.
ClientRoundResult train_client_round(models::Classifier& model, const datakit::LabeledDataset& data,
                                     const models::ModelWeights& global_w, const FedConfig& cfg,
                                     std::uint64_t seed, std::int64_t step_offset = 0);

/// Trainer that builds a fresh classifier and fits it for `epochs` epochs
/// with the optimizer settings of cfg and no proximal term.
models::ClassifierTrainer make_local_trainer(const FedConfig& cfg, std::int64_t epochs);

double accuracy_on(models::Classifier& model, const datakit::LabeledDataset& data);

struct RoundLog {
  std::int64_t round = 0;
  std::vector<std::int64_t> client_ids;
  std::vector<double> client_loss;    // classifier rounds
  std::vector<double> client_g_loss;  // GAN rounds
  std::vector<double> client_d_loss;
  double mean_loss = 0.0;
  double mean_g_loss = 0.0;
  double mean_d_loss = 0.0;
  double val_accuracy = 0.0;
  double best_accuracy = 0.0;
  std::int64_t wait = 0;
};

/// One CSV row per (round, client).
void write_round_log_csv(const std::filesystem::path& path, const std::vector<RoundLog>& logs);

struct FedClassifierResult {
  models::Classifier model{nullptr};
  models::ModelWeights weights;
  std::vector<RoundLog> logs;
  bool early_stopped = false;
};

/// Alg. 4 loop: broadcast, local rounds, count-weighted aggregation,
/// validation, early stopping. Empty clients sit out.
FedClassifierResult federated_train_classifier(const std::vector<datakit::LabeledDataset>& clients,
                                               const datakit::LabeledDataset& validation,
                                               const FedConfig& cfg, Algorithm algorithm,
                                               std::uint64_t seed);

struct GanConfig {
  std::int64_t epochs = 30;
  double mu = 0.01;
  std::int64_t batch_size = 8;
  double lr_generator = 1e-3;
  double lr_discriminator = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  /// Weight of the "real image, wrong label" discriminator term. 0 gives the
  /// plain real/fake objective.
  double mismatch_weight = 1.0;
  // The one-hot code collapses classes at this data scale.
  models::GanSpec spec{.encoding = models::LabelEncoding::learned};

  void validate() const;
};

struct FedGanResult {
  models::Generator generator{nullptr};
  models::Discriminator discriminator{nullptr};
  std::vector<RoundLog> logs;
  std::int64_t participants = 0;
};

/// Alg. 2 loop with unweighted averaging of G and D each epoch.
FedGanResult federated_train_gan(const std::vector<datakit::LabeledDataset>& clients,
                                 const GanConfig& cfg, std::uint64_t seed);

/// Images in [0, 1] -> [-1, 1], the generator's output range.
torch::Tensor to_gan_range(const torch::Tensor& images);

}  // namespace fedclean::fedcore

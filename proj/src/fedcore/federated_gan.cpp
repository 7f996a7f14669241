#include "fedclean/fedcore.hpp"

#include "fedclean/seed.hpp"
#include "fedclean/torch_setup.hpp"

#include <spdlog/spdlog.h>

#include <numeric>

namespace fedclean::fedcore {

namespace F = torch::nn::functional;

void GanConfig::validate() const {
  if (epochs < 1) {
    throw FedError("GAN epochs must be at least 1");
  }
  if (mu < 0.0) {
    throw FedError("mu must be non-negative");
  }
  if (batch_size < 1) {
    throw FedError("GAN batch size must be at least 1");
  }
  if (lr_generator <= 0.0 || lr_discriminator <= 0.0) {
    throw FedError("GAN learning rates must be positive");
  }
  if (mismatch_weight < 0.0) {
    throw FedError("mismatch weight must be non-negative");
  }
}

torch::Tensor to_gan_range(const torch::Tensor& images) { return images * 2.0 - 1.0; }

namespace {

struct ClientState {
  models::Generator g{nullptr};
  models::Discriminator d{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g;
  std::unique_ptr<torch::optim::Adam> opt_d;
};

torch::Tensor bce(const torch::Tensor& logits, float target) {
  return F::binary_cross_entropy_with_logits(logits, torch::full_like(logits, target));
}

}  // namespace

FedGanResult federated_train_gan(const std::vector<datakit::LabeledDataset>& clients,
                                 const GanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  configure_torch_runtime();
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    if (!clients[i].empty()) {
      active.push_back(i);
    }
  }
  if (active.empty()) {
    throw FedError("no client has data for GAN training");
  }
  auto spec = cfg.spec;
  spec.class_count = clients[active.front()].class_count;

  FedGanResult out;
  out.participants = static_cast<std::int64_t>(active.size());
  out.generator = models::build_generator(derive_seed(seed, {seed_tag("gan/G")}), spec);
  out.discriminator = models::build_discriminator(derive_seed(seed, {seed_tag("gan/D")}), spec);
  auto global_g = models::get_weights(*out.generator);
  auto global_d = models::get_weights(*out.discriminator);

  // Optimizer moments stay with the client between epochs; the weights are
  // overwritten by the broadcast at the start of every epoch.
  std::vector<ClientState> state(active.size());
  for (auto& s : state) {
    s.g = models::Generator(spec);
    s.d = models::Discriminator(spec);
    const auto betas = std::make_tuple(cfg.beta1, cfg.beta2);
    s.opt_g = std::make_unique<torch::optim::Adam>(
        s.g->parameters(), torch::optim::AdamOptions(cfg.lr_generator).betas(betas));
    s.opt_d = std::make_unique<torch::optim::Adam>(
        s.d->parameters(), torch::optim::AdamOptions(cfg.lr_discriminator).betas(betas));
  }

  const auto C = spec.class_count;
  for (std::int64_t e = 0; e < cfg.epochs; ++e) {
    RoundLog log;
    log.round = e + 1;
    std::vector<models::ModelWeights> gs;
    std::vector<models::ModelWeights> ds;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto i = active[k];
      auto& s = state[k];
      const auto& data = clients[i];
      const auto client_seed = derive_seed(seed, {seed_tag("gan/epoch"), static_cast<std::uint64_t>(e), i});
      seed_torch(client_seed);
      auto rng = make_rng(derive_seed(client_seed, {seed_tag("batches")}));

      models::set_weights(*s.g, global_g);
      models::set_weights(*s.d, global_d);
      s.g->train();
      s.d->train();

      std::vector<std::int64_t> order(static_cast<std::size_t>(data.size()));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      const auto perm = torch::tensor(order, torch::kInt64);
      const auto real_all = to_gan_range(data.features);

      double g_sum = 0.0;
      double d_sum = 0.0;
      std::int64_t batches = 0;
      for (std::int64_t start = 0; start < data.size(); start += cfg.batch_size) {
        const auto idx = perm.slice(0, start, std::min(data.size(), start + cfg.batch_size));
        const auto real = real_all.index_select(0, idx);
        const auto y = data.labels.index_select(0, idx);
        const auto n = y.size(0);

        const auto fake = s.g->forward(torch::randn({n, spec.latent_dim}), y);

        s.opt_d->zero_grad();
        auto d_loss = bce(s.d->logits(real, y), 1.0f) + bce(s.d->logits(fake.detach(), y), 0.0f);
        if (cfg.mismatch_weight > 0.0 && C > 1) {
          const auto wrong = (y + torch::randint(1, C, {n}, torch::kInt64)).remainder(C);
          d_loss = d_loss + cfg.mismatch_weight * bce(s.d->logits(real, wrong), 0.0f);
        }
        auto d_total = d_loss;
        if (cfg.mu > 0.0) {
          d_total = d_total + proximal_term(*s.d, global_d, cfg.mu);
        }
        d_total.backward();
        s.opt_d->step();

        s.opt_g->zero_grad();
        auto g_loss = bce(s.d->logits(fake, y), 1.0f);
        auto g_total = g_loss;
        if (cfg.mu > 0.0) {
          g_total = g_total + proximal_term(*s.g, global_g, cfg.mu);
        }
        g_total.backward();
        s.opt_g->step();

        g_sum += g_loss.item<double>();
        d_sum += d_loss.item<double>();
        ++batches;
      }
      const double g_mean = g_sum / static_cast<double>(batches);
      const double d_mean = d_sum / static_cast<double>(batches);
      log.client_ids.push_back(static_cast<std::int64_t>(i));
      log.client_g_loss.push_back(g_mean);
      log.client_d_loss.push_back(d_mean);
      gs.push_back(models::get_weights(*s.g));
      ds.push_back(models::get_weights(*s.d));
    }
    global_g = uniform_average(gs);
    global_d = uniform_average(ds);
    const auto m = static_cast<double>(active.size());
    log.mean_g_loss = std::accumulate(log.client_g_loss.begin(), log.client_g_loss.end(), 0.0) / m;
    log.mean_d_loss = std::accumulate(log.client_d_loss.begin(), log.client_d_loss.end(), 0.0) / m;
    spdlog::debug("gan epoch {}: g {:.4f} d {:.4f}", e + 1, log.mean_g_loss, log.mean_d_loss);
    out.logs.push_back(std::move(log));
  }
  models::set_weights(*out.generator, global_g);
  models::set_weights(*out.discriminator, global_d);
  out.generator->eval();
  out.discriminator->eval();
  return out;
}

}  // namespace fedclean::fedcore

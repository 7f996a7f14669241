#include "doctest_torch.hpp"

#include "fedclean/fedcore.hpp"
#include "fedclean/seed.hpp"
#include "fedclean/torch_setup.hpp"
#include "helpers.hpp"

#include <fstream>
#include <limits>
#include <numeric>
#include <random>

using namespace fedclean;
using namespace fedclean::fedcore;
using models::ModelWeights;
using models::weights_from;
using doctest::Approx;

namespace {

ModelWeights random_weights(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<std::vector<double>> v{std::vector<double>(7), std::vector<double>(3), std::vector<double>(1)};
  for (auto& a : v)
    for (auto& x : a) x = nd(rng);
  return weights_from(v);
}

double displacement(const ModelWeights& a, const ModelWeights& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.arrays[i] - b.arrays[i]).pow(2).sum().item<double>();
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("fedcore") {

TEST_CASE("fedavg examples") {
  auto r = fedavg_aggregate({weights_from({{2.0}}), weights_from({{4.0}})}, {5, 5});
  CHECK(r.arrays[0].item<double>() == Approx(3.0));
  r = fedavg_aggregate({weights_from({{0.0}}), weights_from({{4.0}})}, {1, 3});
  CHECK(r.arrays[0].item<double>() == Approx(3.0));
  const auto one = weights_from({{1.5, -2.0}, {7.0}});
  r = fedavg_aggregate({one}, {42});
  CHECK(torch::equal(r.arrays[0], one.arrays[0]));
  CHECK(torch::equal(r.arrays[1], one.arrays[1]));

  r = uniform_average({weights_from({{0.0}}), weights_from({{3.0}}), weights_from({{6.0}})});
  CHECK(r.arrays[0].item<double>() == Approx(3.0));
  CHECK(torch::equal(uniform_average({one}).arrays[0], one.arrays[0]));
}

TEST_CASE("fedavg errors") {
  CHECK_THROWS_AS(fedavg_aggregate({}, {}), FedError);
  CHECK_THROWS_AS(fedavg_aggregate({weights_from({{1.0}})}, {1, 2}), FedError);
  CHECK_THROWS_AS(fedavg_aggregate({weights_from({{1.0}})}, {0}), FedError);
  CHECK_THROWS_AS(fedavg_aggregate({weights_from({{1.0}}), weights_from({{1.0, 2.0}})}, {1, 1}), models::ModelError);
}

TEST_CASE("fedavg is linear, convex, and uniform for equal counts") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::int64_t> cnt(1, 1000);
  for (int t = 0; t < 20; ++t) {
    std::vector<ModelWeights> ws;
    std::vector<std::int64_t> counts;
    for (int i = 0; i < 5; ++i) {
      ws.push_back(random_weights(rng));
      counts.push_back(cnt(rng));
    }
    const auto agg = fedavg_aggregate(ws, counts);
    const double alpha = -2.75;
    std::vector<ModelWeights> scaled;
    for (const auto& w : ws) {
      auto s = w.clone();
      for (auto& a : s.arrays) a.mul_(alpha);
      scaled.push_back(s);
    }
    const auto agg_scaled = fedavg_aggregate(scaled, counts);
    for (std::size_t j = 0; j < agg.size(); ++j) {
      CHECK((agg_scaled.arrays[j] - alpha * agg.arrays[j]).abs().max().item<double>() <= 1e-9);
      auto stack = torch::stack({ws[0].arrays[j], ws[1].arrays[j], ws[2].arrays[j], ws[3].arrays[j], ws[4].arrays[j]});
      CHECK((agg.arrays[j] >= std::get<0>(stack.min(0)) - 1e-12).all().item<bool>());
      CHECK((agg.arrays[j] <= std::get<0>(stack.max(0)) + 1e-12).all().item<bool>());
    }
    const auto eq = fedavg_aggregate(ws, std::vector<std::int64_t>(5, 7));
    const auto un = uniform_average(ws);
    for (std::size_t j = 0; j < eq.size(); ++j) {
      CHECK((eq.arrays[j] - un.arrays[j]).abs().max().item<double>() <= 1e-15);
    }
  }
}

TEST_CASE("proximal penalty") {
  const auto g = weights_from({{1.0, 1.0}});
  CHECK(proximal_penalty(g, g, 0.01) == 0.0);
  CHECK(proximal_penalty(weights_from({{4.0, 5.0}}), g, 0.01) == Approx(0.125));
  CHECK(proximal_penalty(weights_from({{4.0, 5.0}}), g, 0.0) == 0.0);
  CHECK_THROWS_AS(proximal_penalty(g, g, -1.0), FedError);
}

TEST_CASE("proximal term: value and gradient") {
  auto m = models::build_classifier({28, 28, 1}, 10, 3);
  m->to(torch::kFloat64);
  const auto anchor = models::get_weights(*m);
  auto shifted = anchor.clone();
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (auto& a : shifted.arrays) {
    auto flat = a.view({-1});
    for (std::int64_t i = 0; i < std::min<std::int64_t>(flat.numel(), 50); ++i) flat[i] = flat[i].item<double>() + nd(rng);
  }
  models::set_weights(*m, shifted);
  const double mu = 0.37;
  auto term = proximal_term(*m, anchor, mu);

  // value agrees with the penalty over trainable parameters
  const auto n_params = m->parameters().size();
  ModelWeights p_local, p_anchor;
  for (std::size_t i = 0; i < n_params; ++i) {
    p_local.arrays.push_back(shifted.arrays[i]);
    p_anchor.arrays.push_back(anchor.arrays[i]);
  }
  CHECK(term.item<double>() == Approx(proximal_penalty(p_local, p_anchor, mu)).epsilon(1e-12));

  term.backward();
  std::uniform_int_distribution<std::int64_t> pick;
  int checked = 0;
  torch::NoGradGuard no_grad;
  auto params = m->parameters();
  for (auto& p : params) {
    auto flat = p.view({-1});
    for (int s = 0; s < 10; ++s) {
      const auto j = pick(rng) % std::min<std::int64_t>(flat.numel(), 60);
      const double orig = flat[j].item<double>();
      const double h = 1e-5;
      flat[j] = orig + h;
      const double up = proximal_term(*m, anchor, mu).item<double>();
      flat[j] = orig - h;
      const double down = proximal_term(*m, anchor, mu).item<double>();
      flat[j] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p.grad().view({-1})[j].item<double>();
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      CHECK(std::abs(numeric - analytic) / scale < 1e-4);
      ++checked;
    }
  }
  CHECK(checked == 120);
}

TEST_CASE("learning-rate schedule") {
  FedConfig cfg;
  CHECK(cfg.learning_rate(0) == Approx(1e-3));
  CHECK(cfg.learning_rate(100) == Approx(0.95e-3));
  CHECK(cfg.learning_rate(200) == Approx(0.95 * 0.95e-3));
  FedConfig bad;
  bad.patience = 0;
  CHECK_THROWS_AS(bad.validate(), FedError);
  bad = FedConfig{};
  bad.mu = -1;
  CHECK_THROWS_AS(bad.validate(), FedError);
}

TEST_CASE("mu = 0 local training is plain cross-entropy training") {
  auto data = testutil::pattern_dataset(96, 6, 3);
  FedConfig cfg;
  cfg.mu = 0.0;
  cfg.batch_size = 32;
  cfg.local_epochs = 2;
  cfg.lr_decay_steps = 2;  // make the schedule visible over 6 steps
  const std::uint64_t seed = 77;
  auto m = models::build_classifier({28, 28, 1}, 6, 1);
  const auto init = models::get_weights(*m);
  const auto got = train_client_round(m, data, init, cfg, seed, 3);

  // reference loop
  auto ref = models::build_classifier({28, 28, 1}, 6, 99);
  seed_torch(derive_seed(seed, {seed_tag("local/torch")}));
  models::set_weights(*ref, init);
  ref->train();
  torch::optim::Adam opt(ref->parameters(), torch::optim::AdamOptions(cfg.base_lr));
  auto rng = make_rng(derive_seed(seed, {seed_tag("local/batches")}));
  double sum = 0;
  int steps = 0;
  for (int e = 0; e < 2; ++e) {
    std::vector<std::int64_t> order(96);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto perm = torch::tensor(order, torch::kInt64);
    for (std::int64_t s = 0; s < 96; s += 32) {
      auto idx = perm.slice(0, s, s + 32);
      for (auto& gp : opt.param_groups())
        static_cast<torch::optim::AdamOptions&>(gp.options()).lr(1e-3 * std::pow(0.95, (3.0 + steps) / 2.0));
      opt.zero_grad();
      auto loss = torch::nn::functional::cross_entropy(ref->forward(data.features.index_select(0, idx)),
                                                       data.labels.index_select(0, idx));
      loss.backward();
      torch::nn::utils::clip_grad_norm_(ref->parameters(), 5.0);
      opt.step();
      sum += loss.item<double>();
      ++steps;
    }
  }
  CHECK(got.steps == 6);
  CHECK(got.mean_loss == Approx(sum / steps).epsilon(1e-12));
  const auto rw = models::get_weights(*ref);
  for (std::size_t i = 0; i < rw.size(); ++i) CHECK(torch::equal(rw.arrays[i], got.weights.arrays[i]));
}

TEST_CASE("a huge mu keeps the local model closer to the global weights") {
  auto data = testutil::pattern_dataset(128, 6, 5);
  FedConfig cfg;
  cfg.batch_size = 16;
  auto m = models::build_classifier({28, 28, 1}, 6, 2);
  const auto global_w = models::get_weights(*m);
  cfg.mu = 0.0;
  const auto free = train_client_round(m, data, global_w, cfg, 4);
  cfg.mu = 1e6;
  const auto tied = train_client_round(m, data, global_w, cfg, 4);
  const double d_free = displacement(free.weights, global_w);
  const double d_tied = displacement(tied.weights, global_w);
  MESSAGE("displacement mu=0 " << d_free << " mu=1e6 " << d_tied);
  CHECK(d_tied < d_free);
}

TEST_CASE("single client, mu = 0: the global model is the local model") {
  auto data = testutil::pattern_dataset(64, 4, 8);
  FedConfig cfg;
  cfg.rounds = 1;
  cfg.batch_size = 16;
  const std::uint64_t seed = 5;
  const auto res = federated_train_classifier({data}, data, cfg, Algorithm::fedavg, seed);

  auto global0 = models::build_classifier({28, 28, 1}, 4, derive_seed(seed, {seed_tag("global/init")}));
  auto local = models::build_classifier({28, 28, 1}, 4, 1);
  auto lc = cfg;
  lc.mu = 0;
  const auto direct = train_client_round(local, data, models::get_weights(*global0), lc,
                                         derive_seed(seed, {seed_tag("round"), 0, 0}), 0);
  REQUIRE(res.weights.size() == direct.weights.size());
  for (std::size_t i = 0; i < direct.weights.size(); ++i) {
    CHECK(torch::equal(res.weights.arrays[i], direct.weights.arrays[i]));
  }
}

TEST_CASE("infinite tolerance stops after exactly patience rounds") {
  auto data = testutil::pattern_dataset(40, 4, 1);
  FedConfig cfg;
  cfg.rounds = 10;
  cfg.patience = 3;
  cfg.tolerance = std::numeric_limits<double>::infinity();
  const auto res = federated_train_classifier({data, data}, data, cfg, Algorithm::fedprox, 1);
  CHECK(res.logs.size() == 3);
  CHECK(res.early_stopped);
  for (const auto& l : res.logs) CHECK(l.best_accuracy == 0.0);
}

TEST_CASE("round logs obey the early-stopping bookkeeping") {
  auto a = testutil::pattern_dataset(60, 5, 1);
  auto b = testutil::pattern_dataset(30, 5, 2);
  FedConfig cfg;
  cfg.rounds = 8;
  cfg.patience = 2;
  cfg.tolerance = 0.02;
  cfg.batch_size = 16;
  const auto val = testutil::pattern_dataset(50, 5, 9);
  const auto res = federated_train_classifier({a, datakit::empty_dataset(5), b}, val, cfg, Algorithm::fedavg, 3);
  REQUIRE_FALSE(res.logs.empty());
  CHECK(res.logs.size() <= 8);
  double best = 0;
  std::int64_t wait = 0;
  std::size_t last_improvement = 0;
  for (std::size_t r = 0; r < res.logs.size(); ++r) {
    const auto& l = res.logs[r];
    CHECK(l.client_ids == std::vector<std::int64_t>{0, 2});
    CHECK(l.client_loss.size() == 2);
    CHECK(l.mean_loss == Approx((l.client_loss[0] + l.client_loss[1]) / 2));
    CHECK(l.best_accuracy >= best);
    if (l.val_accuracy > best + cfg.tolerance) {
      CHECK(l.wait == 0);
      best = l.val_accuracy;
      wait = 0;
      last_improvement = r;
    } else {
      CHECK(l.wait == wait + 1);
      wait = l.wait;
    }
    CHECK(l.best_accuracy == best);
  }
  if (res.early_stopped) CHECK(res.logs.size() - 1 - last_improvement == 2);
  CHECK_THROWS_AS(federated_train_classifier({datakit::empty_dataset(5)}, val, cfg, Algorithm::fedavg, 1), FedError);
}

TEST_CASE("federated classifier is deterministic") {
  auto a = testutil::pattern_dataset(40, 4, 1);
  auto b = testutil::pattern_dataset(40, 4, 2);
  FedConfig cfg;
  cfg.rounds = 2;
  const auto r1 = federated_train_classifier({a, b}, a, cfg, Algorithm::fedprox, 11);
  const auto r2 = federated_train_classifier({a, b}, a, cfg, Algorithm::fedprox, 11);
  for (std::size_t i = 0; i < r1.weights.size(); ++i) CHECK(torch::equal(r1.weights.arrays[i], r2.weights.arrays[i]));
  // client order does not change what each client computes
  const auto r3 = federated_train_classifier({b, a}, a, cfg, Algorithm::fedprox, 11);
  CHECK(r3.logs[0].client_loss.size() == 2);
}

TEST_CASE("federated GAN bookkeeping") {
  GanConfig cfg;
  cfg.epochs = 2;
  auto a = testutil::pattern_dataset(32, 10, 1);
  auto b = testutil::pattern_dataset(48, 10, 2);
  const auto res = federated_train_gan({a, datakit::empty_dataset(10), b}, cfg, 3);
  CHECK(res.participants == 2);
  REQUIRE(res.logs.size() == 2);
  for (const auto& l : res.logs) {
    CHECK(l.client_ids == std::vector<std::int64_t>{0, 2});
    REQUIRE(l.client_g_loss.size() == 2);
    CHECK(l.mean_g_loss == (l.client_g_loss[0] + l.client_g_loss[1]) / 2.0);
    CHECK(l.mean_d_loss == (l.client_d_loss[0] + l.client_d_loss[1]) / 2.0);
  }
  CHECK_THROWS_AS(federated_train_gan({datakit::empty_dataset(10)}, cfg, 1), FedError);
  cfg.epochs = 0;
  CHECK_THROWS_AS(federated_train_gan({a}, cfg, 1), FedError);
}

TEST_CASE("federated GAN with one client is local training") {
  GanConfig cfg;
  cfg.epochs = 1;
  cfg.mu = 0.0;
  auto a = testutil::pattern_dataset(32, 10, 1);
  const auto fed = federated_train_gan({a}, cfg, 9);
  const auto again = federated_train_gan({a}, cfg, 9);
  const auto w1 = models::get_weights(*fed.generator);
  const auto w2 = models::get_weights(*again.generator);
  for (std::size_t i = 0; i < w1.size(); ++i) CHECK(torch::equal(w1.arrays[i], w2.arrays[i]));
  // training moved the weights away from the seeded initialization
  auto init = models::build_generator(derive_seed(9, {seed_tag("gan/G")}), cfg.spec);
  CHECK(displacement(models::get_weights(*init), w1) > 0.0);

  torch::NoGradGuard no_grad;
  auto z = torch::randn({1, 100}).repeat({2, 1});
  auto gen = fed.generator;
  auto out = gen->forward(z, torch::tensor({1, 6}, torch::kInt64));
  CHECK((out[0] - out[1]).abs().max().item<double>() > 1e-4);
}

TEST_CASE("round log CSV") {
  testutil::TempDir tmp;
  RoundLog l;
  l.round = 1;
  l.client_ids = {0, 3};
  l.client_loss = {0.5, 0.25};
  l.val_accuracy = 0.75;
  l.best_accuracy = 0.75;
  write_round_log_csv(tmp.path / "r.csv", {l, l});
  std::ifstream in(tmp.path / "r.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "round,client_id,loss,g_loss,d_loss,val_accuracy,best_accuracy,wait");
  CHECK(lines[2].rfind("1,3,0.25,", 0) == 0);
}

}  // TEST_SUITE

TEST_SUITE("data") {

TEST_CASE("ten clean MNIST clients reach 90% validation accuracy in ten rounds") {
  using namespace fedclean::datakit;
  auto train = shuffled(load_dataset(DatasetId::mnist, Split::train), 3);
  std::vector<LabeledDataset> clients;
  for (std::int64_t i = 0; i < 10; ++i) {
    std::vector<std::int64_t> idx(600);
    std::iota(idx.begin(), idx.end(), i * 600);
    clients.push_back(train.subset(idx));
  }
  std::vector<std::int64_t> vidx(1000);
  std::iota(vidx.begin(), vidx.end(), 6000);
  FedConfig cfg;
  const auto res = federated_train_classifier(clients, train.subset(vidx), cfg, Algorithm::fedavg, 1);
  MESSAGE("final validation accuracy " << res.logs.back().val_accuracy);
  CHECK(res.logs.back().best_accuracy > 0.9);
}

}  // TEST_SUITE

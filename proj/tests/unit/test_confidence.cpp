#include "doctest_torch.hpp"

#include "fedclean/confidence.hpp"
#include "fedclean/fedcore.hpp"
#include "fedclean/seed.hpp"
#include "helpers.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace fedclean;
using namespace fedclean::confidence;
using doctest::Approx;

namespace {

// Shannon entropy in bits, normalized by log2(C): same quantity as the natural
// log form, computed a different way.
double entropy_oracle(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0) h -= v * std::log2(v);
  }
  return 1.0 - h / std::log2(static_cast<double>(p.size()));
}

// Silhouette from the definition, O(N^2) with explicit loops.
std::vector<double> silhouette_oracle(const std::vector<std::vector<double>>& pts,
                                      const std::vector<std::int64_t>& lab) {
  const auto n = pts.size();
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t d = 0; d < pts[i].size(); ++d) s += (pts[i][d] - pts[j][d]) * (pts[i][d] - pts[j][d]);
    return std::sqrt(s);
  };
  std::set<std::int64_t> clusters(lab.begin(), lab.end());
  std::vector<double> out(n, 0.0);
  if (clusters.size() < 2) return out;
  for (std::size_t i = 0; i < n; ++i) {
    double a_sum = 0;
    int a_n = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && lab[j] == lab[i]) {
        a_sum += dist(i, j);
        ++a_n;
      }
    }
    if (a_n == 0) continue;
    const double a = a_sum / a_n;
    double b = 1e300;
    for (auto c : clusters) {
      if (c == lab[i]) continue;
      double s = 0;
      int m = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (lab[j] == c) {
          s += dist(i, j);
          ++m;
        }
      }
      b = std::min(b, s / m);
    }
    const double den = std::max(a, b);
    out[i] = den == 0 ? 0.0 : (b - a) / den;
  }
  return out;
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

}  // namespace

TEST_SUITE("confidence") {

TEST_CASE("entropy confidence") {
  std::vector<double> onehot(10, 0.0);
  onehot[3] = 1.0;
  CHECK(entropy_confidence(onehot) == Approx(1.0).epsilon(1e-12));
  std::vector<double> uniform(10, 0.1);
  CHECK(entropy_confidence(uniform) == Approx(0.0).epsilon(1e-12));
  std::vector<double> half(10, 0.0);
  half[0] = half[1] = 0.5;
  CHECK(entropy_confidence(half) == Approx(0.6990).epsilon(1e-4));
  CHECK(entropy_confidence(half) == Approx(entropy_oracle(half)).epsilon(1e-12));

  std::mt19937_64 rng(5);
  std::gamma_distribution<double> g(0.3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(7);
    double s = 0;
    for (auto& v : p) s += (v = g(rng) + 1e-300);
    for (auto& v : p) v /= s;
    const double c = entropy_confidence(p);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    CHECK(c == Approx(entropy_oracle(p)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(entropy_confidence(std::vector<double>{0.5, 0.2}), ConfidenceError);
}

TEST_CASE("margin confidence") {
  std::vector<double> onehot(10, 0.0);
  onehot[9] = 1.0;
  CHECK(margin_confidence(onehot) == 1.0);
  CHECK(margin_confidence(std::vector<double>(10, 0.1)) == Approx(0.0));
  CHECK(margin_confidence(std::vector<double>{0.6, 0.3, 0.1}) == Approx(0.3));
  CHECK(margin_confidence(std::vector<double>{0.1, 0.3, 0.6}) == Approx(0.3));
}

TEST_CASE("silhouette of two far pairs") {
  const std::vector<std::vector<double>> pts{{0, 0}, {0, 1}, {10, 0}, {10, 1}};
  const auto s = silhouette(to_matrix(pts), {0, 0, 1, 1});
  const double b = (std::sqrt(100.0) + std::sqrt(101.0)) / 2;
  for (double v : s) {
    CHECK(v == Approx((b - 1.0) / b).epsilon(1e-12));
    CHECK(v == Approx(0.9002).epsilon(1e-4));
  }
  // via k-means with k = 2 and no probability columns beyond a constant
  Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(4, 2, 0.5);
  for (double c : cluster_confidence(to_matrix(pts), probs, 2, 3)) {
    CHECK(c == Approx(0.9501).epsilon(1e-4));
  }
}

TEST_CASE("silhouette matches the definition on random data") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<std::int64_t> pick(0, 3);
  for (int t = 0; t < 10; ++t) {
    std::vector<std::vector<double>> pts(40, std::vector<double>(3));
    std::vector<std::int64_t> lab(40);
    for (std::size_t i = 0; i < 40; ++i) {
      lab[i] = pick(rng);
      for (auto& v : pts[i]) v = nd(rng) + 3.0 * static_cast<double>(lab[i]);
    }
    lab[0] = 3;  // keep at least two clusters
    lab[1] = 0;
    const auto got = silhouette(to_matrix(pts), lab);
    const auto want = silhouette_oracle(pts, lab);
    for (std::size_t i = 0; i < 40; ++i) {
      CHECK(got[i] == Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("degenerate clusterings give 0.5") {
  Eigen::MatrixXd same = Eigen::MatrixXd::Ones(6, 4);
  Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(6, 2, 0.5);
  for (double c : cluster_confidence(same, probs, 2, 1)) {
    CHECK(c == 0.5);
  }
  Eigen::MatrixXd pts(3, 2);
  pts << 0, 0, 5, 5, 9, 1;
  for (double c : cluster_confidence(pts, Eigen::MatrixXd::Constant(3, 2, 0.5), 3, 1)) {
    CHECK(c == 0.5);
  }
  CHECK_THROWS_AS(cluster_confidence(pts, Eigen::MatrixXd::Constant(3, 2, 0.5), 1, 1), ConfidenceError);
}

TEST_CASE("kmeans separates obvious groups and is seeded") {
  Eigen::MatrixXd pts(6, 1);
  pts << 0, 0.1, 0.2, 50, 50.1, 50.2;
  const auto a = kmeans(pts, 2, 7);
  CHECK(a.assignment[0] == a.assignment[1]);
  CHECK(a.assignment[1] == a.assignment[2]);
  CHECK(a.assignment[3] == a.assignment[4]);
  CHECK(a.assignment[0] != a.assignment[3]);
  CHECK(kmeans(pts, 2, 7).assignment == a.assignment);
}

TEST_CASE("percentile and adaptive threshold") {
  CHECK(adaptive_threshold(std::vector<double>{0.0, 0.5, 1.0}) == Approx(0.583333333333).epsilon(1e-12));
  CHECK(adaptive_threshold(std::vector<double>{0.0, 1.0}) == Approx(0.583333333333).epsilon(1e-12));
  for (double c : {0.0, 0.1, 0.3, 0.7123, 1.0}) {
    std::vector<double> v(37, c);
    CHECK(adaptive_threshold(v) == c);
    CHECK(retained_by_threshold(v, adaptive_threshold(v)).size() == 37);
  }
  CHECK(percentile(std::vector<double>{4, 1, 3, 2}, 0.0) == 1);
  CHECK(percentile(std::vector<double>{4, 1, 3, 2}, 1.0) == 4);
  CHECK(percentile(std::vector<double>{4, 1, 3, 2}, 0.5) == Approx(2.5));
  CHECK(percentile(std::vector<double>{4, 1, 3, 2}, 0.75) == Approx(3.25));
  CHECK_THROWS_AS(adaptive_threshold(std::vector<double>{}), ConfidenceError);
}

TEST_CASE("retention is exactly the >= filter and idempotent") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s(101);
    for (auto& v : s) v = std::round(u(rng) * 20) / 20;  // ties on purpose
    const double T = adaptive_threshold(s);
    const auto kept = retained_by_threshold(s, T);
    std::vector<std::int64_t> brute;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!(s[i] < T)) brute.push_back(static_cast<std::int64_t>(i));
    CHECK(kept == brute);
    std::vector<double> again;
    for (auto i : kept) again.push_back(s[static_cast<std::size_t>(i)]);
    CHECK(retained_by_threshold(again, T).size() == again.size());
  }
}

TEST_CASE("score_samples: aggregate is the exact mean and all scores in [0, 1]") {
  torch::manual_seed(0);
  auto feats = torch::rand({60, 28, 28});
  auto probs = torch::softmax(torch::randn({60, 10}) * 3, 1);
  const auto s = score_samples(feats, probs, 10, 4);
  REQUIRE(s.size() == 60);
  CHECK(s.entropy_conf.size() == 60);
  CHECK(s.margin_conf.size() == 60);
  CHECK(s.cluster_conf.size() == 60);
  for (std::size_t i = 0; i < 60; ++i) {
    const double mean = (s.entropy_conf[i] + s.margin_conf[i] + s.cluster_conf[i]) / 3.0;
    CHECK(std::abs(s.aggregate[i] - mean) <= 1e-12);
    for (double v : {s.entropy_conf[i], s.margin_conf[i], s.cluster_conf[i], s.aggregate[i]}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(s.predicted_label[i] == probs[static_cast<std::int64_t>(i)].argmax().item<std::int64_t>());
  }
}

TEST_CASE("stratified folds partition the indices and balance classes") {
  std::vector<std::int64_t> labels;
  for (int i = 0; i < 103; ++i) labels.push_back(i % 4 == 0 ? 1 : 0);
  const auto folds = stratified_folds(labels, 5, 9);
  REQUIRE(folds.size() == 5);
  std::vector<std::int64_t> all;
  for (const auto& f : folds) {
    CHECK((f.size() == 20 || f.size() == 21));
    std::int64_t ones = 0;
    for (auto i : f) ones += labels[static_cast<std::size_t>(i)];
    CHECK(ones >= 5);
    CHECK(ones <= 6);
    all.insert(all.end(), f.begin(), f.end());
  }
  std::sort(all.begin(), all.end());
  for (std::int64_t i = 0; i < 103; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
  CHECK(stratified_folds(labels, 5, 9) == folds);
  CHECK_THROWS_AS(stratified_folds(labels, 1, 9), ConfidenceError);
  CHECK_THROWS_AS(stratified_folds({0, 1}, 3, 9), ConfidenceError);
}

TEST_CASE("each sample is scored by a model that never trained on it") {
  auto ds = testutil::toy_dataset(50, 10, 2);
  std::vector<std::set<std::int64_t>> seen;
  models::ClassifierTrainer recorder = [&](const datakit::LabeledDataset& d, std::uint64_t seed) {
    const auto o = d.origin_vector();
    seen.emplace_back(o.begin(), o.end());
    return models::build_classifier({28, 28, 1}, d.class_count, seed);
  };
  const auto r = clean_client_dataset(ds, recorder, {5, 0, true}, 8);
  REQUIRE(seen.size() == 6);  // five folds and the final model
  for (std::int64_t i = 0; i < 50; ++i) {
    const auto k = r.fold_of[static_cast<std::size_t>(i)];
    REQUIRE(k >= 0);
    CHECK(seen[static_cast<std::size_t>(k)].count(i) == 0);
    CHECK(seen[static_cast<std::size_t>(k)].size() == 40);
  }
  // report invariants
  const auto& rep = r.report;
  CHECK(rep.retained_indices == retained_by_threshold(r.scores.aggregate, rep.threshold));
  CHECK(rep.relabeled_count >= 0);
  CHECK(rep.relabeled_count <= static_cast<std::int64_t>(rep.retained_indices.size()));
  CHECK(r.cleaned.size() == static_cast<std::int64_t>(rep.retained_indices.size()));
  CHECK(r.final_model.has_value());
  const auto js = rep.to_json();
  CHECK(js.at("retained_count").get<std::size_t>() == rep.retained_indices.size());
  CHECK(js.contains("per_metric_means"));
  // retained samples carry their predicted labels
  for (std::size_t j = 0; j < rep.retained_indices.size(); ++j) {
    const auto i = static_cast<std::size_t>(rep.retained_indices[j]);
    CHECK(r.cleaned.labels[static_cast<std::int64_t>(j)].item<std::int64_t>() == r.scores.predicted_label[i]);
  }
}

TEST_CASE("separable toy set keeps most samples and barely relabels") {
  // two Gaussian blobs at different positions of the image
  const std::int64_t n = 200;
  auto yy = torch::arange(n, torch::kInt64).remainder(2);
  auto grid = torch::arange(28, torch::kFloat32);
  auto gy = grid.view({28, 1});
  auto gx = grid.view({1, 28});
  auto blob = [&](double cy, double cx) {
    return torch::exp(-((gy - cy).pow(2) + (gx - cx).pow(2)) / 18.0);
  };
  torch::manual_seed(1);
  auto x = torch::empty({n, 28, 28});
  for (std::int64_t i = 0; i < n; ++i) {
    const bool one = yy[i].item<std::int64_t>() == 1;
    x[i] = blob(one ? 20 : 8, one ? 20 : 8) + 0.05 * torch::rand({28, 28});
  }
  auto ds = datakit::make_dataset(x.clamp(0, 1), yy, 2);
  fedcore::FedConfig cfg;
  cfg.batch_size = 16;
  const auto r = clean_client_dataset(ds, fedcore::make_local_trainer(cfg, 3), {2, 0, false}, 5);
  const auto kept = static_cast<double>(r.report.retained_indices.size());
  CHECK(kept / n >= 0.5);
  CHECK(static_cast<double>(r.report.relabeled_count) / kept <= 0.05);
  CHECK_FALSE(r.final_model.has_value());
}

TEST_CASE("cleaning is deterministic") {
  auto ds = testutil::pattern_dataset(60, 3, 4);
  auto trainer = fedcore::make_local_trainer(fedcore::FedConfig{}, 1);
  const auto a = clean_client_dataset(ds, trainer, {3, 0, false}, 12);
  const auto b = clean_client_dataset(ds, trainer, {3, 0, false}, 12);
  CHECK(a.scores.aggregate == b.scores.aggregate);
  CHECK(a.report.retained_indices == b.report.retained_indices);
  CHECK(testutil::tensors_equal(a.cleaned.labels, b.cleaned.labels));
}

}  // TEST_SUITE

TEST_SUITE("data") {

TEST_CASE("cleaning raises label agreement on noisy MNIST") {
  using namespace fedclean::datakit;
  const auto source = load_dataset(DatasetId::mnist, Split::train);
  const auto truth = source.label_vector();  // origin of a train row is its index here
  auto train = shuffled(source, 21);
  // valid: classes 0..7, feedstock: 8 and 9
  std::vector<std::int64_t> vi, ni;
  const auto y = train.label_vector();
  for (std::size_t i = 0; i < y.size() && (vi.size() < 1400 || ni.size() < 600); ++i) {
    if (y[i] >= 8) {
      if (ni.size() < 600) ni.push_back(static_cast<std::int64_t>(i));
    } else if (vi.size() < 1400) {
      vi.push_back(static_cast<std::int64_t>(i));
    }
  }
  auto noisy = inject_noise(train.subset(vi), train.subset(ni), {0.3, {8, 9}, 3});
  REQUIRE(noisy.size() == 2000);
  auto agreement = [&](const LabeledDataset& d) {
    const auto o = d.origin_vector();
    const auto l = d.label_vector();
    double ok = 0;
    for (std::size_t i = 0; i < o.size(); ++i) ok += l[i] == truth[static_cast<std::size_t>(o[i])] ? 1 : 0;
    return ok / static_cast<double>(o.size());
  };
  CHECK(agreement(noisy) == Approx(0.7).epsilon(1e-9));
  fedcore::FedConfig cfg;
  auto r = clean_client_dataset(noisy, fedcore::make_local_trainer(cfg, 5), {5, 0, false}, 4);
  MESSAGE("cleaned agreement " << agreement(r.cleaned) << " kept " << r.cleaned.size());
  CHECK(agreement(r.cleaned) > 0.7);
}

}  // TEST_SUITE

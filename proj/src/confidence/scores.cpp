#include "fedclean/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedclean::confidence {

namespace {

void check_distribution(std::span<const double> p) {
  if (p.size() < 2) {
    throw ConfidenceError("probability vector needs at least two classes");
  }
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) {
      throw ConfidenceError("probability vector has a negative or NaN entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ConfidenceError("probability vector sums to " + std::to_string(sum));
  }
}

}  // namespace

double entropy_confidence(std::span<const double> p) {
  check_distribution(p);
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) {
      h -= v * std::log(v);
    }
  }
  return std::clamp(1.0 - h / std::log(static_cast<double>(p.size())), 0.0, 1.0);
}

double margin_confidence(std::span<const double> p) {
  check_distribution(p);
  double first = -1.0;
  double second = -1.0;
  for (double v : p) {
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return first - second;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) {
    throw ConfidenceError("percentile of an empty array");
  }
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

double adaptive_threshold(std::span<const double> scores) {
  if (scores.empty()) {
    throw ConfidenceError("adaptive threshold of an empty score array");
  }
  const double mean =
      std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  const double t = (mean + percentile(scores, 0.5) + percentile(scores, 0.75)) / 3.0;
  // rounding in the sum can push a constant array's threshold just above it
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  return std::clamp(t, *lo, *hi);
}

std::vector<std::int64_t> retained_by_threshold(std::span<const double> scores, double threshold) {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) {
      out.push_back(static_cast<std::int64_t>(i));
    }
  }
  return out;
}

ConfidenceScores score_samples(const torch::Tensor& features, const torch::Tensor& probs,
                               std::int64_t cluster_k, std::uint64_t seed) {
  const auto n = probs.size(0);
  const auto C = probs.size(1);
  if (features.size(0) != n) {
    throw ConfidenceError("features and probabilities disagree on N");
  }
  auto p64 = probs.to(torch::kFloat64).clamp_min(0.0);
  p64 = (p64 / p64.sum(1, true)).contiguous();
  auto x64 = features.reshape({n, -1}).to(torch::kFloat64).contiguous();

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::MatrixXd P = Eigen::Map<const RowMat>(p64.data_ptr<double>(), n, C);
  const Eigen::MatrixXd X = Eigen::Map<const RowMat>(x64.data_ptr<double>(), n, x64.size(1));

  ConfidenceScores s;
  s.entropy_conf.resize(static_cast<std::size_t>(n));
  s.margin_conf.resize(static_cast<std::size_t>(n));
  s.predicted_label.resize(static_cast<std::size_t>(n));
  const double* base = p64.data_ptr<double>();
  for (std::int64_t i = 0; i < n; ++i) {
    std::span<const double> row(base + i * C, static_cast<std::size_t>(C));
    s.entropy_conf[static_cast<std::size_t>(i)] = entropy_confidence(row);
    s.margin_conf[static_cast<std::size_t>(i)] = margin_confidence(row);
    s.predicted_label[static_cast<std::size_t>(i)] =
        std::max_element(row.begin(), row.end()) - row.begin();
  }

  const auto k = std::min<std::int64_t>(cluster_k, n);
  if (k >= 2) {
    s.cluster_conf = cluster_confidence(X, P, k, seed);
  } else {
    s.cluster_conf.assign(static_cast<std::size_t>(n), 0.5);
  }

  s.aggregate.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < s.aggregate.size(); ++i) {
    s.aggregate[i] = (s.entropy_conf[i] + s.margin_conf[i] + s.cluster_conf[i]) / 3.0;
  }
  return s;
}

}  // namespace fedclean::confidence

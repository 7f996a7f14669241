#include "fedclean/confidence.hpp"

#include "fedclean/seed.hpp"

#include <limits>

namespace fedclean::confidence {

KMeansResult kmeans(const Eigen::MatrixXd& points, std::int64_t k, std::uint64_t seed,
                    int max_iterations) {
  const auto n = points.rows();
  if (k < 1) {
    throw ConfidenceError("k must be positive");
  }
  if (n < k) {
    throw ConfidenceError("k-means needs at least k points (N=" + std::to_string(n) +
                          ", k=" + std::to_string(k) + ")");
  }
  auto rng = make_rng(seed);

  // k-means++ seeding
  Eigen::MatrixXd centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Eigen::VectorXd d2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (std::int64_t c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2(pick);
        if (r < 0.0) {
          break;
        }
      }
      while (d2(pick) == 0.0 && pick > 0) {
        --pick;  // never land on a zero-weight point through rounding
      }
    } else {
      pick = first(rng);
    }
    centroids.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  const Eigen::MatrixXd cols = points.transpose();
  KMeansResult out;
  out.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    const Eigen::MatrixXd ct = centroids.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      std::int64_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::int64_t c = 0; c < k; ++c) {
        const double d = (cols.col(i) - ct.col(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      auto& slot = out.assignment[static_cast<std::size_t>(i)];
      changed |= slot != best;
      slot = best;
    }
    out.iterations = it + 1;
    if (!changed) {
      break;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = out.assignment[static_cast<std::size_t>(i)];
      sums.row(c) += points.row(i);
      counts(c) += 1.0;
    }
    for (std::int64_t c = 0; c < k; ++c) {
      if (counts(c) > 0.0) {
        centroids.row(c) = sums.row(c) / counts(c);
      }
    }
  }
  out.centroids = std::move(centroids);
  return out;
}

std::vector<double> silhouette(const Eigen::MatrixXd& points,
                               const std::vector<std::int64_t>& assignment) {
  const auto n = points.rows();
  if (static_cast<std::size_t>(n) != assignment.size()) {
    throw ConfidenceError("assignment length differs from point count");
  }
  std::int64_t k = 0;
  for (auto a : assignment) {
    k = std::max(k, a + 1);
  }
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(k), 0);
  for (auto a : assignment) {
    ++sizes[static_cast<std::size_t>(a)];
  }

  const Eigen::MatrixXd cols = points.transpose();  // contiguous per point
  std::vector<double> s(static_cast<std::size_t>(n), 0.0);
  std::vector<double> sum(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto own = assignment[static_cast<std::size_t>(i)];
    if (sizes[static_cast<std::size_t>(own)] <= 1) {
      continue;
    }
    std::fill(sum.begin(), sum.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) {
        sum[static_cast<std::size_t>(assignment[static_cast<std::size_t>(j)])] +=
            (cols.col(i) - cols.col(j)).norm();
      }
    }
    const double a = sum[static_cast<std::size_t>(own)] /
                     static_cast<double>(sizes[static_cast<std::size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c < k; ++c) {
      if (c != own && sizes[static_cast<std::size_t>(c)] > 0) {
        b = std::min(b, sum[static_cast<std::size_t>(c)] / static_cast<double>(sizes[static_cast<std::size_t>(c)]));
      }
    }
    if (!std::isfinite(b)) {
      continue;
    }
    const double m = std::max(a, b);
    s[static_cast<std::size_t>(i)] = m > 0.0 ? (b - a) / m : 0.0;
  }
  return s;
}

std::vector<double> cluster_confidence(const Eigen::MatrixXd& features, const Eigen::MatrixXd& probs,
                                       std::int64_t k, std::uint64_t seed) {
  if (features.rows() != probs.rows()) {
    throw ConfidenceError("features and probabilities disagree on N");
  }
  if (k < 2) {
    throw ConfidenceError("cluster count must be at least 2");
  }
  if (features.cols() < 1) {
    throw ConfidenceError("features must have at least one column");
  }
  Eigen::MatrixXd joined(features.rows(), features.cols() + probs.cols());
  joined << features, probs;
  const auto km = kmeans(joined, k, seed);
  auto s = silhouette(joined, km.assignment);
  for (auto& v : s) {
    v = (v + 1.0) / 2.0;
  }
  return s;
}

}  // namespace fedclean::confidence

#pragma once

// Out-of-fold confidence scoring and threshold-based relabel/filter cleaning.

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedclean/datakit.hpp"
#include "fedclean/models.hpp"

namespace fedclean::confidence {

class ConfidenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 1 - H(p)/ln(C), with 0 ln 0 = 0.
double entropy_confidence(std::span<const double> p);

/// Largest minus second-largest probability.
double margin_confidence(std::span<const double> p);

struct KMeansResult {
  std::vector<std::int64_t> assignment;
  Eigen::MatrixXd centroids;  // k x D
  int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations. Ties go to the lowest
/// cluster index; a cluster that loses all points keeps its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& points, std::int64_t k, std::uint64_t seed,
                    int max_iterations = 100);

/// Per-point silhouette in [-1, 1] with Euclidean distance. Members of
/// singleton clusters, and every point when only one cluster is occupied,
/// get 0; so does a point with a = b = 0.
std::vector<double> silhouette(const Eigen::MatrixXd& points,
                               const std::vector<std::int64_t>& assignment);

/// (s + 1) / 2 of the silhouette after clustering rows of [features, probs].
std::vector<double> cluster_confidence(const Eigen::MatrixXd& features, const Eigen::MatrixXd& probs,
                                       std::int64_t k, std::uint64_t seed);

/// Linear interpolation between order statistics (position q * (n - 1)).
double percentile(std::span<const double> values, double q);

/// (mean + median + 75th percentile) / 3.
double adaptive_threshold(std::span<const double> scores);

struct ConfidenceScores {
  std::vector<double> entropy_conf;
  std::vector<double> margin_conf;
  std::vector<double> cluster_conf;
  std::vector<double> aggregate;
  std::vector<std::int64_t> predicted_label;

  std::size_t size() const { return aggregate.size(); }
};

/// Scores one batch of samples given their predicted probabilities.
/// `probs` rows are renormalized in double precision first.
ConfidenceScores score_samples(const torch::Tensor& features, const torch::Tensor& probs,
                               std::int64_t cluster_k, std::uint64_t seed);

/// Stratified assignment of sample indices to K folds: each class is shuffled
/// and the classes are then dealt round-robin across folds.
std::vector<std::vector<std::int64_t>> stratified_folds(const std::vector<std::int64_t>& labels,
                                                        std::int64_t folds, std::uint64_t seed);

struct CleaningOptions {
  std::int64_t folds = 5;
  std::int64_t cluster_k = 0;  // 0 means "class count"
  bool train_final_model = true;
};

struct CleaningReport {
  double threshold = 0.0;
  std::vector<std::int64_t> retained_indices;
  std::int64_t relabeled_count = 0;
  std::int64_t fold_count = 0;
  std::int64_t input_count = 0;
  double mean_entropy = 0.0;
  double mean_margin = 0.0;
  double mean_cluster = 0.0;
  double mean_aggregate = 0.0;

  nlohmann::json to_json() const;
};

struct CleaningResult {
  datakit::LabeledDataset cleaned;
  CleaningReport report;
  ConfidenceScores scores;
  std::vector<std::int64_t> fold_of;  // fold that scored each input sample
  std::optional<models::Classifier> final_model;
};

/// Scores every sample with a model trained on the other folds, keeps the
/// samples whose aggregate confidence reaches the adaptive threshold and
/// relabels them with the predicted class.
CleaningResult clean_client_dataset(const datakit::LabeledDataset& ds,
                                    const models::ClassifierTrainer& trainer,
                                    const CleaningOptions& options, std::uint64_t seed);

/// Keeps indices with score >= threshold.
std::vector<std::int64_t> retained_by_threshold(std::span<const double> scores, double threshold);

}  // namespace fedclean::confidence

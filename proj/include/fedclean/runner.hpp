#pragma once

// Experiment orchestration: variants, grid cells, result tables and plots.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedclean/datakit.hpp"
#include "fedclean/fedcore.hpp"
#include "fedclean/metrics.hpp"

namespace fedclean::runner {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant { CleanAvg, CleanProx, GenCleanAvg, GenCleanProx, FedAvgNoisy, FedProxNoisy };

struct VariantFlags {
  bool clean = false;     // stage 1
  bool generate = false;  // stages 2 and 3
  fedcore::Algorithm algorithm = fedcore::Algorithm::fedavg;
};

VariantFlags flags_of(Variant v);
Variant parse_variant(const std::string& name);
std::string to_string(Variant v);
const std::vector<Variant>& all_variants();

struct ExperimentConfig {
  std::vector<datakit::DatasetId> datasets{datakit::DatasetId::mnist};
  std::vector<Variant> variants{Variant::CleanProx};
  std::vector<double> noise_ratios{0.1, 0.3, 0.5, 0.7};
  std::vector<std::int64_t> missing_counts{2, 4};
  std::int64_t num_clients = 10;
  std::int64_t samples_per_client = 600;
  std::int64_t validation_size = 600;
  std::int64_t repetitions = 3;
  std::uint64_t seed = 42;

  fedcore::FedConfig fed;
  fedcore::GanConfig gan;
  std::int64_t cleaning_folds = 5;
  std::int64_t cleaning_epochs = 20;
  std::int64_t cluster_k = 0;  // 0: class count

  std::filesystem::path output_dir = "results";
  std::filesystem::path data_dir;  // empty: datakit::default_cache_dir()
  /// When false the runtime_s column is written as 0 so that results.csv is
  /// byte-reproducible; wall-clock times always go to timings.csv.
  bool record_runtime = false;
  bool write_round_logs = true;
  bool write_plots = true;

  void validate() const;
  std::filesystem::path cache_dir() const;
};

/// Reads a YAML document. Unknown keys are rejected. `dataset`/`variant`
/// accept a single value or a list (`datasets`/`variants` are aliases).
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& yaml_text);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Master seed of repetition `rep` for a dataset. Partition, noise, cleaning,
/// GAN and federated training seeds are all derived from it, and it does not
/// depend on the variant, so variants are compared on identical data.
std::uint64_t repetition_seed(const ExperimentConfig& cfg, datakit::DatasetId dataset,
                              std::int64_t rep);

struct CellKey {
  datakit::DatasetId dataset = datakit::DatasetId::mnist;
  Variant variant = Variant::CleanProx;
  double noise = 0.0;
  std::int64_t missing = 0;
  std::int64_t rep = 0;
};

/// Which stages ran for a cell and what they produced.
struct StageLog {
  bool corrupted = false;
  bool cleaned = false;
  bool gan_trained = false;
  bool completed = false;
  std::string algorithm;
  double mu = 0.0;
  std::vector<std::int64_t> client_sizes_noisy;
  std::vector<std::int64_t> client_sizes_cleaned;
  std::vector<std::int64_t> client_sizes_final;
  std::vector<std::vector<std::int64_t>> missing_classes;
  std::vector<std::vector<std::int64_t>> synthetic_classes;
  std::vector<std::int64_t> synthetic_counts;
  double noisy_label_agreement = 0.0;    // vs. ground truth, pooled over clients
  double cleaned_label_agreement = 0.0;  // real samples only
  bool test_leak = false;
  std::int64_t rounds_run = 0;

  nlohmann::json to_json() const;
};

struct CellResult {
  CellKey key;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  metrics::EvalReport report;
  double runtime_s = 0.0;
  StageLog stages;
  std::vector<fedcore::RoundLog> rounds;
  std::vector<fedcore::RoundLog> gan_rounds;
};

struct Splits {
  datakit::LabeledDataset train;
  datakit::LabeledDataset test;
};

std::shared_ptr<const Splits> load_splits(const ExperimentConfig& cfg, datakit::DatasetId dataset);

/// Data shared by all variants of one (dataset, noise, missing, rep) cell:
/// noisy client sets, their ground truth, the clean validation carve-out and
/// the untouched test split. Stage outputs are memoized here too, so running
/// CleanAvg after CleanProx reuses the cleaned client sets.
struct CellData;

class CellContext {
 public:
  CellContext(const ExperimentConfig& cfg, datakit::DatasetId dataset, double noise,
              std::int64_t missing, std::int64_t rep, std::shared_ptr<const Splits> splits = nullptr);
  ~CellContext();
  CellContext(CellContext&&) noexcept;
  CellContext& operator=(CellContext&&) noexcept;

  CellResult run(Variant variant);
  std::uint64_t seed() const;

 private:
  std::unique_ptr<CellData> data_;
};

/// One grid cell, built from scratch. Failures are captured in the result.
CellResult run_cell(const ExperimentConfig& cfg, datakit::DatasetId dataset, Variant variant,
                    double noise, std::int64_t missing, std::int64_t rep);

struct GridOutcome {
  std::vector<CellResult> results;
  std::int64_t failed = 0;
};

/// Every (dataset, noise, missing, rep, variant) cell. Writes results.csv,
/// summary.csv, timings.csv, stages.jsonl, per-cell round logs and plots
/// under cfg.output_dir. Throws ConfigError when the directory is unwritable.
GridOutcome run_grid(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Tables

struct ResultRow {
  std::string dataset;
  std::string variant;
  double noise = 0.0;
  std::int64_t missing = 0;
  std::int64_t rep = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double runtime_s = 0.0;
};

struct SummaryRow {
  std::string dataset;
  std::string variant;
  double noise = 0.0;
  std::int64_t missing = 0;
  std::int64_t repetitions = 0;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;  // sample standard deviation, 0 for one repetition
  double min_f1 = 0.0;
  double max_f1 = 0.0;
  double mean_accuracy = 0.0;
};

ResultRow to_row(const CellResult& r, bool record_runtime);
std::string results_header();
std::string format_row(const ResultRow& row);
void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

/// f1_vs_noise_<dataset>.png, f1_vs_missing_<dataset>.png, heatmap.png.
std::vector<std::filesystem::path> write_plots(const std::vector<ResultRow>& rows,
                                               const std::filesystem::path& dir);

}  // namespace fedclean::runner

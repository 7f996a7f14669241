// fedclean: run experiment grids, rebuild reports, prefetch datasets.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "fedclean/runner.hpp"

#include <iostream>

using namespace fedclean;

namespace {

int cmd_run(runner::ExperimentConfig cfg) {
  const auto outcome = runner::run_grid(cfg);
  const auto total = static_cast<std::int64_t>(outcome.results.size());
  spdlog::info("{} of {} cells succeeded; results in {}", total - outcome.failed, total,
               cfg.output_dir.string());
  return outcome.failed == 0 ? 0 : 2;
}

int cmd_report(const std::filesystem::path& in, const std::filesystem::path& plots,
               const std::filesystem::path& summary) {
  const auto rows = runner::read_results_csv(in);
  if (rows.empty()) {
    spdlog::error("{} has no rows", in.string());
    return 1;
  }
  const auto sum = runner::summarize(rows);
  if (!summary.empty()) {
    runner::write_summary_csv(summary, sum);
  }
  for (const auto& s : sum) {
    std::cout << s.dataset << ' ' << s.variant << " noise=" << s.noise << " missing=" << s.missing
              << " reps=" << s.repetitions << " macro-F1 " << s.mean_f1 << " +- " << s.std_f1 << '\n';
  }
  if (!plots.empty()) {
    for (const auto& p : runner::write_plots(rows, plots)) {
      spdlog::info("wrote {}", p.string());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated label-noise cleaning and missing-class completion experiments"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

  auto* run = app.add_subcommand("run", "Run one cell or a grid of cells");
  std::string config_path;
  std::vector<std::string> datasets;
  std::vector<std::string> variants;
  std::vector<double> noise;
  std::vector<std::int64_t> missing;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> reps;
  std::optional<std::int64_t> rounds;
  std::optional<std::int64_t> clients;
  std::optional<std::int64_t> per_client;
  std::optional<std::int64_t> gan_epochs;
  std::string out_dir;
  std::string data_dir;
  bool record_runtime = false;
  run->add_option("--config", config_path, "YAML experiment config")->check(CLI::ExistingFile);
  run->add_option("--dataset", datasets, "mnist and/or fashion-mnist");
  run->add_option("--variant", variants, "CleanAvg CleanProx GenCleanAvg GenCleanProx FedAvgNoisy FedProxNoisy, or all");
  run->add_option("--noise", noise, "noise ratio(s) in [0, 1)");
  run->add_option("--missing", missing, "missing classes per client");
  run->add_option("--seed", seed, "master seed");
  run->add_option("--repetitions", reps, "seeded repetitions per cell");
  run->add_option("--rounds", rounds, "maximum federated rounds");
  run->add_option("--clients", clients, "number of clients");
  run->add_option("--samples-per-client", per_client, "client shard size before corruption");
  run->add_option("--gan-epochs", gan_epochs, "federated GAN epochs");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--data-dir", data_dir, "dataset cache (default: $FEDCLEAN_DATA_DIR or ~/.cache/fedclean)");
  run->add_flag("--record-runtime", record_runtime, "write wall-clock seconds into results.csv");

  auto* report = app.add_subcommand("report", "Summaries and plots from an existing results.csv");
  std::string in_path;
  std::string plots_dir;
  std::string summary_path;
  report->add_option("--in", in_path, "results.csv")->required()->check(CLI::ExistingFile);
  report->add_option("--plots", plots_dir, "directory for PNG plots");
  report->add_option("--summary", summary_path, "write summary.csv here");

  auto* fetch = app.add_subcommand("fetch", "Download and verify datasets into the cache");
  std::vector<std::string> fetch_sets{"mnist", "fashion-mnist"};
  std::string fetch_dir;
  fetch->add_option("datasets", fetch_sets, "datasets to fetch")->capture_default_str();
  fetch->add_option("--data-dir", fetch_dir, "dataset cache directory");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (run->parsed()) {
      runner::ExperimentConfig cfg;
      if (!config_path.empty()) {
        cfg = runner::load_config(config_path);
      } else {
        // single-cell defaults for command-line runs
        cfg.noise_ratios = {0.3};
        cfg.missing_counts = {4};
        cfg.repetitions = 1;
      }
      if (!datasets.empty()) {
        cfg.datasets.clear();
        for (const auto& d : datasets) {
          cfg.datasets.push_back(datakit::parse_dataset_id(d));
        }
      }
      if (!variants.empty()) {
        cfg.variants.clear();
        for (const auto& v : variants) {
          if (v == "all") {
            cfg.variants = runner::all_variants();
            break;
          }
          cfg.variants.push_back(runner::parse_variant(v));
        }
      }
      if (!noise.empty()) cfg.noise_ratios = noise;
      if (!missing.empty()) cfg.missing_counts = missing;
      if (seed) cfg.seed = *seed;
      if (reps) cfg.repetitions = *reps;
      if (rounds) cfg.fed.rounds = *rounds;
      if (clients) cfg.num_clients = *clients;
      if (per_client) cfg.samples_per_client = *per_client;
      if (gan_epochs) cfg.gan.epochs = *gan_epochs;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      if (record_runtime) cfg.record_runtime = true;
      cfg.validate();
      return cmd_run(cfg);
    }
    if (report->parsed()) {
      return cmd_report(in_path, plots_dir, summary_path);
    }
    if (fetch->parsed()) {
      const std::filesystem::path dir =
          fetch_dir.empty() ? datakit::default_cache_dir() : std::filesystem::path(fetch_dir);
      for (const auto& d : fetch_sets) {
        datakit::ensure_dataset(datakit::parse_dataset_id(d), dir);
        spdlog::info("{} ready in {}", d, (dir / d).string());
      }
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}

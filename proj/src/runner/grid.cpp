#include "fedclean/runner.hpp"

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <map>

namespace fedclean::runner {

namespace {

std::string cell_stem(const CellResult& r) {
  return fmt::format("{}_{}_n{}_m{}_r{}", datakit::to_string(r.key.dataset), to_string(r.key.variant),
                     r.key.noise, r.key.missing, r.key.rep);
}

}  // namespace

GridOutcome run_grid(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& dir = cfg.output_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
  {
    std::ofstream probe(dir / "config.json", std::ios::trunc);
    if (!probe) {
      throw ConfigError("output directory " + dir.string() + " is not writable");
    }
    probe << config_to_json(cfg).dump(2) << '\n';
  }
  if (cfg.write_round_logs) {
    std::filesystem::create_directories(dir / "rounds");
  }

  GridOutcome out;
  std::vector<ResultRow> rows;
  std::ofstream stages(dir / "stages.jsonl", std::ios::trunc);
  std::ofstream timings(dir / "timings.csv", std::ios::trunc);
  timings << "dataset,variant,noise,missing,rep,ok,runtime_s,error\n";

  const auto total = static_cast<std::int64_t>(cfg.datasets.size() * cfg.noise_ratios.size() *
                                               cfg.missing_counts.size() * cfg.variants.size()) *
                     cfg.repetitions;
  std::int64_t done = 0;
  for (auto dataset : cfg.datasets) {
    std::shared_ptr<const Splits> splits;
    try {
      splits = load_splits(cfg, dataset);
    } catch (const std::exception& e) {
      spdlog::error("cannot load {}: {}", datakit::to_string(dataset), e.what());
    }
    for (double noise : cfg.noise_ratios) {
      for (auto missing : cfg.missing_counts) {
        for (std::int64_t rep = 0; rep < cfg.repetitions; ++rep) {
          CellContext ctx(cfg, dataset, noise, missing, rep, splits);
          for (auto variant : cfg.variants) {
            auto res = ctx.run(variant);
            ++done;
            spdlog::info("[{}/{}] {} {} noise={} missing={} rep={}: {}", done, total,
                         datakit::to_string(dataset), to_string(variant), noise, missing, rep,
                         res.ok ? fmt::format("macro-F1 {:.4f} ({:.0f}s)", res.report.macro_f1, res.runtime_s)
                                : "FAILED: " + res.error);
            nlohmann::json j{{"dataset", datakit::to_string(dataset)},
                             {"variant", to_string(variant)},
                             {"noise", noise},
                             {"missing", missing},
                             {"rep", rep},
                             {"seed", res.seed},
                             {"ok", res.ok},
                             {"error", res.error},
                             {"stages", res.stages.to_json()}};
            stages << j.dump() << '\n' << std::flush;
            timings << fmt::format("{},{},{},{},{},{},{:.3f},\"{}\"\n", datakit::to_string(dataset),
                                   to_string(variant), noise, missing, rep, res.ok ? 1 : 0, res.runtime_s,
                                   res.error)
                    << std::flush;
            if (cfg.write_round_logs && res.ok) {
              fedcore::write_round_log_csv(dir / "rounds" / (cell_stem(res) + ".csv"), res.rounds);
              if (!res.gan_rounds.empty()) {
                fedcore::write_round_log_csv(dir / "rounds" / (cell_stem(res) + "_gan.csv"), res.gan_rounds);
              }
            }
            if (res.ok) {
              rows.push_back(to_row(res, cfg.record_runtime));
              write_results_csv(dir / "results.csv", rows);
            } else {
              ++out.failed;
            }
            out.results.push_back(std::move(res));
          }
        }
      }
    }
  }
  write_results_csv(dir / "results.csv", rows);
  write_summary_csv(dir / "summary.csv", summarize(rows));
  if (cfg.write_plots && !rows.empty()) {
    write_plots(rows, dir / "plots");
  }
  return out;
}

}  // namespace fedclean::runner

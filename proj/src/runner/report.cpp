#include "fedclean/runner.hpp"

#include <spdlog/fmt/fmt.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace fedclean::runner {

namespace {

// Shortest text that reads back to the same double, so files are both
// byte-stable and lossless.
std::string num(double v) { return fmt::format("{}", v); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

}  // namespace

ResultRow to_row(const CellResult& r, bool record_runtime) {
  ResultRow row;
  row.dataset = datakit::to_string(r.key.dataset);
  row.variant = to_string(r.key.variant);
  row.noise = r.key.noise;
  row.missing = r.key.missing;
  row.rep = r.key.rep;
  row.seed = r.seed;
  row.accuracy = r.report.accuracy;
  row.macro_precision = r.report.macro_precision;
  row.macro_recall = r.report.macro_recall;
  row.macro_f1 = r.report.macro_f1;
  row.runtime_s = record_runtime ? r.runtime_s : 0.0;
  return row;
}

std::string results_header() {
  return "dataset,variant,noise,missing,rep,seed,accuracy,macro_precision,macro_recall,macro_f1,runtime_s";
}

std::string format_row(const ResultRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{}", r.dataset, r.variant, num(r.noise), r.missing, r.rep,
                     r.seed, num(r.accuracy), num(r.macro_precision), num(r.macro_recall), num(r.macro_f1),
                     num(r.runtime_s));
}

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  out << results_header() << '\n';
  for (const auto& r : rows) {
    out << format_row(r) << '\n';
  }
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line != results_header()) {
    throw ConfigError(path.string() + " does not start with the results header");
  }
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 11) {
      throw ConfigError(fmt::format("{}:{}: expected 11 fields, got {}", path.string(), lineno, f.size()));
    }
    try {
      ResultRow r;
      r.dataset = f[0];
      r.variant = f[1];
      r.noise = std::stod(f[2]);
      r.missing = std::stoll(f[3]);
      r.rep = std::stoll(f[4]);
      r.seed = std::stoull(f[5]);
      r.accuracy = std::stod(f[6]);
      r.macro_precision = std::stod(f[7]);
      r.macro_recall = std::stod(f[8]);
      r.macro_f1 = std::stod(f[9]);
      r.runtime_s = std::stod(f[10]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ConfigError(fmt::format("{}:{}: malformed number", path.string(), lineno));
    }
  }
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  // keep first-seen order of cells
  std::vector<std::tuple<std::string, std::string, double, std::int64_t>> order;
  std::map<std::tuple<std::string, std::string, double, std::int64_t>, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.dataset, r.variant, r.noise, r.missing);
    auto& g = groups[key];
    if (g.empty()) {
      order.push_back(key);
    }
    g.push_back(&r);
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    SummaryRow s;
    std::tie(s.dataset, s.variant, s.noise, s.missing) = key;
    s.repetitions = static_cast<std::int64_t>(g.size());
    s.min_f1 = g.front()->macro_f1;
    s.max_f1 = g.front()->macro_f1;
    for (const auto* r : g) {
      s.mean_f1 += r->macro_f1;
      s.mean_accuracy += r->accuracy;
      s.min_f1 = std::min(s.min_f1, r->macro_f1);
      s.max_f1 = std::max(s.max_f1, r->macro_f1);
    }
    const auto n = static_cast<double>(g.size());
    s.mean_f1 /= n;
    s.mean_accuracy /= n;
    if (g.size() > 1) {
      double ss = 0.0;
      for (const auto* r : g) {
        ss += (r->macro_f1 - s.mean_f1) * (r->macro_f1 - s.mean_f1);
      }
      s.std_f1 = std::sqrt(ss / (n - 1.0));
    }
    out.push_back(s);
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  out << "dataset,variant,noise,missing,repetitions,mean_macro_f1,std_macro_f1,min_macro_f1,max_macro_f1,"
         "mean_accuracy\n";
  for (const auto& s : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", s.dataset, s.variant, num(s.noise), s.missing,
                       s.repetitions, num(s.mean_f1), num(s.std_f1), num(s.min_f1), num(s.max_f1),
                       num(s.mean_accuracy));
  }
}

}  // namespace fedclean::runner

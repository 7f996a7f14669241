#pragma once

// Confusion counts, accuracy and macro-averaged precision/recall/F1.

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedclean::metrics {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::int64_t class_count = 0;
  std::int64_t n = 0;
  double accuracy = 0.0;
  std::vector<ClassScores> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::vector<std::int64_t> support;

  nlohmann::json to_json() const;
};

/// Undefined ratios (0/0) count as 0 and every class, present or not,
/// contributes equally to the macro means. Accuracy of an empty input is 0.
EvalReport evaluate(const std::vector<std::int64_t>& y_true, const std::vector<std::int64_t>& y_pred,
                    std::int64_t class_count);

}  // namespace fedclean::metrics

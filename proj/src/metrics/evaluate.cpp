#include "fedclean/metrics.hpp"

namespace fedclean::metrics {

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EvalReport evaluate(const std::vector<std::int64_t>& y_true, const std::vector<std::int64_t>& y_pred,
                    std::int64_t class_count) {
  if (y_true.size() != y_pred.size()) {
    throw MetricsError("y_true has " + std::to_string(y_true.size()) + " labels, y_pred " +
                       std::to_string(y_pred.size()));
  }
  if (class_count < 1) {
    throw MetricsError("class_count must be positive");
  }
  const auto C = static_cast<std::size_t>(class_count);
  EvalReport r;
  r.class_count = class_count;
  r.n = static_cast<std::int64_t>(y_true.size());
  r.confusion.assign(C, std::vector<std::int64_t>(C, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const auto t = y_true[i];
    const auto p = y_pred[i];
    if (t < 0 || t >= class_count || p < 0 || p >= class_count) {
      throw MetricsError("label out of range at position " + std::to_string(i));
    }
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }

  std::int64_t correct = 0;
  r.support.assign(C, 0);
  std::vector<std::int64_t> predicted(C, 0);
  for (std::size_t t = 0; t < C; ++t) {
    for (std::size_t p = 0; p < C; ++p) {
      r.support[t] += r.confusion[t][p];
      predicted[p] += r.confusion[t][p];
    }
    correct += r.confusion[t][t];
  }
  r.accuracy = ratio(correct, r.n);

  r.per_class.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto tp = r.confusion[c][c];
    auto& s = r.per_class[c];
    s.precision = ratio(tp, predicted[c]);
    s.recall = ratio(tp, r.support[c]);
    const double denom = s.precision + s.recall;
    s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
    r.macro_precision += s.precision;
    r.macro_recall += s.recall;
    r.macro_f1 += s.f1;
  }
  r.macro_precision /= static_cast<double>(C);
  r.macro_recall /= static_cast<double>(C);
  r.macro_f1 /= static_cast<double>(C);
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    per.push_back({{"class", c},
                   {"precision", per_class[c].precision},
                   {"recall", per_class[c].recall},
                   {"f1", per_class[c].f1},
                   {"support", support[c]}});
  }
  return {{"n", n},
          {"class_count", class_count},
          {"accuracy", accuracy},
          {"macro_precision", macro_precision},
          {"macro_recall", macro_recall},
          {"macro_f1", macro_f1},
          {"per_class", per},
          {"confusion", confusion}};
}

}  // namespace fedclean::metrics

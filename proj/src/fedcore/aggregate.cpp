#include "fedclean/fedcore.hpp"

namespace fedclean::fedcore {

std::string to_string(Algorithm a) { return a == Algorithm::fedavg ? "fedavg" : "fedprox"; }

models::ModelWeights fedavg_aggregate(const std::vector<models::ModelWeights>& weights,
                                      const std::vector<std::int64_t>& counts) {
  if (weights.empty()) {
    throw FedError("cannot aggregate an empty list of weights");
  }
  if (weights.size() != counts.size()) {
    throw FedError("weights and counts differ in length");
  }
  std::int64_t total = 0;
  for (auto c : counts) {
    if (c <= 0) {
      throw FedError("client sample counts must be positive");
    }
    total += c;
  }
  for (std::size_t i = 1; i < weights.size(); ++i) {
    models::check_compatible(weights[0], weights[i]);
  }
  models::ModelWeights out;
  for (std::size_t j = 0; j < weights[0].size(); ++j) {
    auto acc = torch::zeros_like(weights[0].arrays[j], torch::kFloat64);
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc.add_(weights[i].arrays[j].to(torch::kFloat64),
               static_cast<double>(counts[i]) / static_cast<double>(total));
    }
    out.arrays.push_back(acc);
  }
  return out;
}

models::ModelWeights uniform_average(const std::vector<models::ModelWeights>& weights) {
  return fedavg_aggregate(weights, std::vector<std::int64_t>(weights.size(), 1));
}

double proximal_penalty(const models::ModelWeights& local, const models::ModelWeights& global_w,
                        double mu) {
  if (mu < 0.0) {
    throw FedError("mu must be non-negative");
  }
  models::check_compatible(local, global_w);
  double sq = 0.0;
  for (std::size_t j = 0; j < local.size(); ++j) {
    sq += (local.arrays[j].to(torch::kFloat64) - global_w.arrays[j].to(torch::kFloat64))
              .pow(2)
              .sum()
              .item<double>();
  }
  return 0.5 * mu * sq;
}

torch::Tensor proximal_term(const torch::nn::Module& model, const models::ModelWeights& anchor,
                            double mu) {
  const auto params = model.parameters(true);
  if (anchor.size() < params.size()) {
    throw FedError("proximal anchor has fewer arrays than the model has parameters");
  }
  auto total = torch::zeros({}, params.empty() ? torch::kFloat32 : params[0].scalar_type());
  if (mu == 0.0) {
    return total;
  }
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (params[j].sizes() != anchor.arrays[j].sizes()) {
      throw models::ModelError("shape mismatch at position " + std::to_string(j) +
                               " in proximal anchor");
    }
    total = total + (params[j] - anchor.arrays[j].to(params[j].scalar_type())).pow(2).sum();
  }
  return total * (0.5 * mu);
}

void clip_global_norm(const std::vector<torch::Tensor>& params, double max_norm) {
  torch::nn::utils::clip_grad_norm_(params, max_norm);
}

}  // namespace fedclean::fedcore

#include "fedclean/models.hpp"

#include <sstream>

namespace fedclean::models {

namespace {

std::string dims(torch::IntArrayRef s) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << (i ? "," : "") << s[i];
  }
  out << ']';
  return out.str();
}

bool is_counter(const std::string& name) {
  constexpr std::string_view suffix = "num_batches_tracked";
  return name.size() >= suffix.size() &&
         name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<torch::Tensor> slots(const torch::nn::Module& model) {
  std::vector<torch::Tensor> out = model.parameters(true);
  for (const auto& item : model.named_buffers(true)) {
    if (!is_counter(item.key())) {
      out.push_back(item.value());
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::int64_t>> ModelWeights::shapes() const {
  std::vector<std::vector<std::int64_t>> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) {
    out.emplace_back(a.sizes().begin(), a.sizes().end());
  }
  return out;
}

std::int64_t ModelWeights::numel() const {
  std::int64_t n = 0;
  for (const auto& a : arrays) {
    n += a.numel();
  }
  return n;
}

ModelWeights ModelWeights::clone() const {
  ModelWeights out;
  out.arrays.reserve(arrays.size());
  for (const auto& a : arrays) {
    out.arrays.push_back(a.clone());
  }
  return out;
}

ModelWeights weights_from(const std::vector<std::vector<double>>& values) {
  ModelWeights w;
  for (const auto& v : values) {
    w.arrays.push_back(torch::tensor(v, torch::kFloat64));
  }
  return w;
}

std::string shape_signature(const ModelWeights& w) {
  std::string out;
  for (std::size_t i = 0; i < w.arrays.size(); ++i) {
    out += (i ? ";" : "") + dims(w.arrays[i].sizes());
  }
  return out;
}

void check_compatible(const ModelWeights& a, const ModelWeights& b) {
  if (a.size() != b.size()) {
    throw ModelError("weight lists have different lengths (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.arrays[i].sizes() != b.arrays[i].sizes()) {
      throw ModelError("shape mismatch at position " + std::to_string(i) + ": " +
                       dims(a.arrays[i].sizes()) + " vs " + dims(b.arrays[i].sizes()));
    }
  }
}

ModelWeights get_weights(const torch::nn::Module& model) {
  torch::NoGradGuard no_grad;
  ModelWeights w;
  for (const auto& t : slots(model)) {
    w.arrays.push_back(t.detach().to(torch::kFloat64).clone().contiguous());
  }
  return w;
}

void set_weights(torch::nn::Module& model, const ModelWeights& w) {
  auto targets = slots(model);
  if (targets.size() != w.size()) {
    throw ModelError("model has " + std::to_string(targets.size()) + " weight arrays, got " +
                     std::to_string(w.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].sizes() != w.arrays[i].sizes()) {
      throw ModelError("shape mismatch at position " + std::to_string(i) + ": model expects " +
                       dims(targets[i].sizes()) + ", got " + dims(w.arrays[i].sizes()));
    }
  }
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    targets[i].copy_(w.arrays[i]);
  }
}

std::int64_t parameter_count(const torch::nn::Module& model) {
  std::int64_t n = 0;
  for (const auto& p : model.parameters(true)) {
    if (p.requires_grad()) {
      n += p.numel();
    }
  }
  return n;
}

}  // namespace fedclean::models

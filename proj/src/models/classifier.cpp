#include "fedclean/models.hpp"

#include "fedclean/torch_setup.hpp"

namespace fedclean::models {

ClassifierImpl::ClassifierImpl(std::int64_t classes) : class_count(classes) {
  if (class_count < 2) {
    throw ModelError("classifier needs at least two classes");
  }
  namespace nn = torch::nn;
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(1, 32, 3).padding(1)));
  bn1 = register_module("bn1", nn::BatchNorm2d(32));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(32, 64, 3).padding(1)));
  bn2 = register_module("bn2", nn::BatchNorm2d(64));
  fc1 = register_module("fc1", nn::Linear(64 * 7 * 7, 128));
  drop = register_module("drop", nn::Dropout(0.5));
  fc2 = register_module("fc2", nn::Linear(128, class_count));
}

torch::Tensor ClassifierImpl::forward(torch::Tensor x) {
  if (x.dim() == 3) {
    x = x.unsqueeze(1);
  }
  x = torch::max_pool2d(torch::relu(bn1->forward(conv1->forward(x))), 2);
  x = torch::max_pool2d(torch::relu(bn2->forward(conv2->forward(x))), 2);
  x = drop->forward(torch::relu(fc1->forward(x.flatten(1))));
  return fc2->forward(x);
}

Classifier build_classifier(std::array<std::int64_t, 3> input_shape, std::int64_t class_count,
                            std::uint64_t seed) {
  if (input_shape != std::array<std::int64_t, 3>{datakit::kImageSide, datakit::kImageSide, 1}) {
    throw ModelError("unsupported input shape; expected 28x28x1");
  }
  configure_torch_runtime();
  seed_torch(seed);
  return Classifier(class_count);
}

torch::Tensor predict_proba(Classifier& model, const torch::Tensor& features,
                            std::int64_t batch_size) {
  const bool was_training = model->is_training();
  model->eval();
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  const auto n = features.size(0);
  for (std::int64_t i = 0; i < n; i += batch_size) {
    const auto end = std::min(n, i + batch_size);
    parts.push_back(torch::softmax(model->forward(features.slice(0, i, end)), 1));
  }
  model->train(was_training);
  if (parts.empty()) {
    return torch::empty({0, model->class_count}, features.options());
  }
  return torch::cat(parts, 0);
}

torch::Tensor predict_labels(Classifier& model, const torch::Tensor& features) {
  auto p = predict_proba(model, features);
  return p.size(0) == 0 ? torch::empty({0}, torch::kInt64) : p.argmax(1);
}

}  // namespace fedclean::models

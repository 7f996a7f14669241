#include "fedclean/models.hpp"

#include "fedclean/torch_setup.hpp"

namespace fedclean::models {

namespace nn = torch::nn;

LabelEncoding parse_label_encoding(const std::string& name) {
  if (name == "one_hot" || name == "onehot" || name == "one-hot") {
    return LabelEncoding::one_hot;
  }
  if (name == "learned" || name == "embedding") {
    return LabelEncoding::learned;
  }
  throw ModelError("unknown label encoding '" + name + "'");
}

std::string to_string(LabelEncoding e) { return e == LabelEncoding::one_hot ? "one_hot" : "learned"; }

LabelCodeImpl::LabelCodeImpl(std::int64_t classes, LabelEncoding enc)
    : class_count(classes), encoding(enc) {
  if (encoding == LabelEncoding::learned) {
    table = register_module("table", nn::Embedding(class_count, class_count));
  }
}

torch::Tensor LabelCodeImpl::forward(const torch::Tensor& labels) {
  if (encoding == LabelEncoding::learned) {
    return table->forward(labels);
  }
  return torch::one_hot(labels, class_count).to(torch::kFloat32);
}

GeneratorImpl::GeneratorImpl(const GanSpec& s) : spec(s) {
  const auto slope = nn::LeakyReLUOptions().negative_slope(spec.leaky_slope);
  code = register_module("code", LabelCode(spec.class_count, spec.encoding));
  body = register_module(
      "body", nn::Sequential(nn::Linear(spec.latent_dim + spec.class_count, 256), nn::LeakyReLU(slope),
                             nn::Linear(256, 512), nn::LeakyReLU(slope), nn::Linear(512, 1024),
                             nn::LeakyReLU(slope),
                             nn::Linear(1024, datakit::kImageSide * datakit::kImageSide),
                             nn::Tanh()));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& labels) {
  auto h = torch::cat({z, code->forward(labels).to(z.dtype())}, 1);
  return body->forward(h).view({-1, datakit::kImageSide, datakit::kImageSide});
}

DiscriminatorImpl::DiscriminatorImpl(const GanSpec& s) : spec(s) {
  const auto slope = nn::LeakyReLUOptions().negative_slope(spec.leaky_slope);
  const auto in = datakit::kImageSide * datakit::kImageSide + spec.class_count;
  code = register_module("code", LabelCode(spec.class_count, spec.encoding));
  body = register_module(
      "body", nn::Sequential(nn::Linear(in, 1024), nn::LeakyReLU(slope), nn::Dropout(spec.dropout),
                             nn::Linear(1024, 512), nn::LeakyReLU(slope), nn::Dropout(spec.dropout),
                             nn::Linear(512, 256), nn::LeakyReLU(slope), nn::Dropout(spec.dropout),
                             nn::Linear(256, 1)));
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& images, const torch::Tensor& labels) {
  auto h = torch::cat({images.flatten(1), code->forward(labels).to(images.dtype())}, 1);
  return body->forward(h).squeeze(1);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images, const torch::Tensor& labels) {
  return torch::sigmoid(logits(images, labels));
}

Generator build_generator(std::uint64_t seed, const GanSpec& spec) {
  configure_torch_runtime();
  seed_torch(seed);
  return Generator(spec);
}

Discriminator build_discriminator(std::uint64_t seed, const GanSpec& spec) {
  configure_torch_runtime();
  seed_torch(seed);
  return Discriminator(spec);
}

}  // namespace fedclean::models

#pragma once

// CNN classifier, conditional GAN pair, and positional weight exchange.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedclean/datakit.hpp"

namespace fedclean::models {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered snapshot of every parameter and running-statistic buffer of a
/// model, stored as detached float64 tensors so averaging is exact enough for
/// tight oracle comparisons.
struct ModelWeights {
  std::vector<torch::Tensor> arrays;

  std::size_t size() const { return arrays.size(); }
  bool empty() const { return arrays.empty(); }
  std::vector<std::vector<std::int64_t>> shapes() const;
  std::int64_t numel() const;
  ModelWeights clone() const;
};

/// Builds weights from plain values (tests and tools).
ModelWeights weights_from(const std::vector<std::vector<double>>& values);

/// "[a,b];[c];..." - used in checkpoint headers and error messages.
std::string shape_signature(const ModelWeights& w);

/// Throws ModelError naming the first offending position.
void check_compatible(const ModelWeights& a, const ModelWeights& b);

/// Parameters in registration order, then buffers (batch-norm running mean
/// and variance). num_batches_tracked counters are not weights and are left
/// out.
ModelWeights get_weights(const torch::nn::Module& model);
void set_weights(torch::nn::Module& model, const ModelWeights& w);

/// Trainable parameter count.
std::int64_t parameter_count(const torch::nn::Module& model);

// ---------------------------------------------------------------------------
// Classifier

struct ClassifierImpl : torch::nn::Module {
  explicit ClassifierImpl(std::int64_t class_count = datakit::kDefaultClassCount);

  /// Logits. Accepts N x 28 x 28 or N x 1 x 28 x 28.
  torch::Tensor forward(torch::Tensor x);

  std::int64_t class_count;
  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::Conv2d conv2{nullptr};
  torch::nn::BatchNorm2d bn2{nullptr};
  torch::nn::Linear fc1{nullptr};
  torch::nn::Dropout drop{nullptr};
  torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(Classifier);

/// input_shape is {height, width, channels}; only {28, 28, 1} is supported.
Classifier build_classifier(std::array<std::int64_t, 3> input_shape, std::int64_t class_count,
                            std::uint64_t seed);

/// Softmax probabilities (N x C) in inference mode, computed in batches.
/// The module's training flag is restored afterwards.
torch::Tensor predict_proba(Classifier& model, const torch::Tensor& features,
                            std::int64_t batch_size = 1024);

torch::Tensor predict_labels(Classifier& model, const torch::Tensor& features);

/// Trains a fresh classifier on a dataset. Supplied by the caller so that
/// cleaning does not depend on a particular optimizer setup.
using ClassifierTrainer =
    std::function<Classifier(const datakit::LabeledDataset& data, std::uint64_t seed)>;

// ---------------------------------------------------------------------------
// Conditional GAN

enum class LabelEncoding { one_hot, learned };

LabelEncoding parse_label_encoding(const std::string& name);
std::string to_string(LabelEncoding e);

struct GanSpec {
  std::int64_t latent_dim = 100;
  std::int64_t class_count = datakit::kDefaultClassCount;
  LabelEncoding encoding = LabelEncoding::one_hot;
  double leaky_slope = 0.2;
  double dropout = 0.3;
};

/// 10-wide label code: fixed one-hot rows or a learned embedding table.
struct LabelCodeImpl : torch::nn::Module {
  LabelCodeImpl(std::int64_t class_count, LabelEncoding encoding);
  torch::Tensor forward(const torch::Tensor& labels);

  std::int64_t class_count;
  LabelEncoding encoding;
  torch::nn::Embedding table{nullptr};
};
TORCH_MODULE(LabelCode);

struct GeneratorImpl : torch::nn::Module {
  explicit GeneratorImpl(const GanSpec& spec = {});
  /// z: N x latent_dim, labels: N -> images N x 28 x 28 in [-1, 1].
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& labels);

  GanSpec spec;
  LabelCode code{nullptr};
  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(Generator);

struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(const GanSpec& spec = {});
  /// Pre-sigmoid scores, N.
  torch::Tensor logits(const torch::Tensor& images, const torch::Tensor& labels);
  /// Probability of "real", N values in (0, 1).
  torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& labels);

  GanSpec spec;
  LabelCode code{nullptr};
  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(Discriminator);

Generator build_generator(std::uint64_t seed, const GanSpec& spec = {});
Discriminator build_discriminator(std::uint64_t seed, const GanSpec& spec = {});

// ---------------------------------------------------------------------------
// Checkpoints

/// Architecture tag plus shape signature, e.g. "classifier:C=10|[32,1,3,3];...".
std::string architecture_signature(const std::string& kind, const ModelWeights& w);

/// Binary container: magic, signature string, array count, then per array its
/// rank, dims and row-major float32 payload. Little-endian.
void save_checkpoint(const std::filesystem::path& path, const ModelWeights& w,
                     const std::string& signature);

/// Throws ModelError when the stored signature differs from `expected_signature`
/// (pass an empty string to skip the check).
ModelWeights load_checkpoint(const std::filesystem::path& path,
                             const std::string& expected_signature);

}  // namespace fedclean::models

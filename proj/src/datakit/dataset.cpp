#include "fedclean/datakit.hpp"

#include "fedclean/seed.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>

namespace fedclean::datakit {

namespace {

torch::Tensor index_tensor(const std::vector<std::int64_t>& indices) {
  return torch::tensor(indices, torch::kInt64);
}

}  // namespace

void LabeledDataset::validate() const {
  if (class_count < 1) {
    throw DatasetError("class_count must be positive");
  }
  if (!features.defined() || !labels.defined() || !origin.defined()) {
    throw DatasetError("dataset tensors are undefined");
  }
  if (features.dim() != 3 || features.size(1) != kImageSide || features.size(2) != kImageSide) {
    throw DatasetError("features must have shape N x 28 x 28");
  }
  if (labels.dim() != 1 || origin.dim() != 1) {
    throw DatasetError("labels and origin must be one-dimensional");
  }
  const auto n = labels.size(0);
  if (features.size(0) != n || origin.size(0) != n) {
    throw DatasetError("features, labels and origin disagree on N (" +
                       std::to_string(features.size(0)) + ", " + std::to_string(n) + ", " +
                       std::to_string(origin.size(0)) + ")");
  }
  if (features.scalar_type() != torch::kFloat32 || labels.scalar_type() != torch::kInt64 ||
      origin.scalar_type() != torch::kInt64) {
    throw DatasetError("features must be float32; labels and origin int64");
  }
  if (n == 0) {
    return;
  }
  if (features.min().item<float>() < 0.0f || features.max().item<float>() > 1.0f) {
    throw DatasetError("feature values must lie in [0, 1]");
  }
  if (labels.min().item<std::int64_t>() < 0 || labels.max().item<std::int64_t>() >= class_count) {
    throw DatasetError("labels must lie in [0, " + std::to_string(class_count) + ")");
  }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::int64_t>& indices) const {
  if (indices.empty()) {
    return empty_dataset(class_count);
  }
  const auto idx = index_tensor(indices);
  LabeledDataset out;
  out.features = features.index_select(0, idx).contiguous();
  out.labels = labels.index_select(0, idx).contiguous();
  out.origin = origin.index_select(0, idx).contiguous();
  out.class_count = class_count;
  return out;
}

std::vector<std::int64_t> LabeledDataset::label_vector() const {
  if (empty()) {
    return {};
  }
  auto c = labels.contiguous();
  return {c.data_ptr<std::int64_t>(), c.data_ptr<std::int64_t>() + c.numel()};
}

std::vector<std::int64_t> LabeledDataset::origin_vector() const {
  if (empty()) {
    return {};
  }
  auto c = origin.contiguous();
  return {c.data_ptr<std::int64_t>(), c.data_ptr<std::int64_t>() + c.numel()};
}

std::vector<std::int64_t> LabeledDataset::class_histogram() const {
  std::vector<std::int64_t> hist(static_cast<std::size_t>(class_count), 0);
  for (auto y : label_vector()) {
    ++hist[static_cast<std::size_t>(y)];
  }
  return hist;
}

std::vector<std::int64_t> LabeledDataset::present_classes() const {
  std::vector<std::int64_t> out;
  const auto hist = class_histogram();
  for (std::size_t c = 0; c < hist.size(); ++c) {
    if (hist[c] > 0) {
      out.push_back(static_cast<std::int64_t>(c));
    }
  }
  return out;
}

LabeledDataset make_dataset(torch::Tensor features, torch::Tensor labels, std::int64_t class_count,
                            torch::Tensor origin) {
  LabeledDataset ds;
  ds.features = features.to(torch::kFloat32).contiguous();
  ds.labels = labels.to(torch::kInt64).contiguous();
  ds.origin = origin.defined() ? origin.to(torch::kInt64).contiguous()
                               : torch::arange(ds.labels.size(0), torch::kInt64);
  ds.class_count = class_count;
  ds.validate();
  return ds;
}

LabeledDataset empty_dataset(std::int64_t class_count) {
  LabeledDataset ds;
  ds.features = torch::empty({0, kImageSide, kImageSide}, torch::kFloat32);
  ds.labels = torch::empty({0}, torch::kInt64);
  ds.origin = torch::empty({0}, torch::kInt64);
  ds.class_count = class_count;
  return ds;
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.class_count != b.class_count) {
    throw DatasetError("cannot concatenate datasets with different class counts");
  }
  LabeledDataset out;
  out.features = torch::cat({a.features, b.features}, 0);
  out.labels = torch::cat({a.labels, b.labels}, 0);
  out.origin = torch::cat({a.origin, b.origin}, 0);
  out.class_count = a.class_count;
  return out;
}

LabeledDataset shuffled(const LabeledDataset& ds, std::uint64_t seed) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return ds.subset(order);
}

DatasetId parse_dataset_id(std::string_view name) {
  if (name == "mnist") {
    return DatasetId::mnist;
  }
  if (name == "fashion-mnist" || name == "fashion_mnist" || name == "fashionmnist") {
    return DatasetId::fashion_mnist;
  }
  throw DatasetError("unsupported dataset '" + std::string(name) +
                     "' (expected mnist or fashion-mnist)");
}

std::string to_string(DatasetId id) {
  return id == DatasetId::mnist ? "mnist" : "fashion-mnist";
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

std::filesystem::path default_cache_dir() {
  if (const char* env = std::getenv("FEDCLEAN_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  if (const char* home = std::getenv("HOME"); home != nullptr && *home != '\0') {
    return std::filesystem::path(home) / ".cache" / "fedclean";
  }
  return std::filesystem::temp_directory_path() / "fedclean";
}

std::filesystem::path images_path(const std::filesystem::path& cache_dir, DatasetId id, Split split) {
  return cache_dir / to_string(id) / (to_string(split) + "-images.idx");
}

std::filesystem::path labels_path(const std::filesystem::path& cache_dir, DatasetId id, Split split) {
  return cache_dir / to_string(id) / (to_string(split) + "-labels.idx");
}

LabeledDataset load_dataset(DatasetId id, Split split, const std::filesystem::path& cache_dir) {
  ensure_dataset(id, cache_dir);
  const auto images = read_idx_images(images_path(cache_dir, id, split));
  const auto labels = read_idx_labels(labels_path(cache_dir, id, split));
  if (images.rows != kImageSide || images.cols != kImageSide) {
    throw DatasetError("unexpected image size in " + to_string(id));
  }
  if (static_cast<std::int64_t>(labels.size()) != images.count) {
    throw DatasetError("image and label counts differ in " + to_string(id));
  }
  const auto n = images.count;
  auto pixels = torch::from_blob(const_cast<std::uint8_t*>(images.pixels.data()),
                                 {n, kImageSide, kImageSide}, torch::kUInt8);
  auto features = pixels.to(torch::kFloat32).div_(255.0f);
  auto label_tensor =
      torch::from_blob(const_cast<std::uint8_t*>(labels.data()), {n}, torch::kUInt8).to(torch::kInt64);
  auto origin = torch::arange(n, torch::kInt64);
  if (split == Split::test) {
    origin.add_(kTestOriginBase);
  }
  return make_dataset(features, label_tensor, kDefaultClassCount, origin);
}

}  // namespace fedclean::datakit

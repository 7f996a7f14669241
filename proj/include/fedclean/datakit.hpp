#pragma once

// Dataset ingestion, client partitioning and the label-noise corruption model.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fedclean::datakit {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::int64_t kImageSide = 28;
inline constexpr std::int64_t kDefaultClassCount = 10;

/// Origins at or above this value refer to the test split; origin -1 marks a
/// synthetic sample.
inline constexpr std::int64_t kTestOriginBase = std::int64_t{1} << 32;
inline constexpr std::int64_t kSyntheticOrigin = -1;

/// Images plus integer labels. `origin` records where each row came from in
/// the source split so ground truth and leakage can be traced through every
/// pipeline stage.
struct LabeledDataset {
  torch::Tensor features;  // N x 28 x 28, float32, values in [0, 1]
  torch::Tensor labels;    // N, int64, values in [0, class_count)
  torch::Tensor origin;    // N, int64
  std::int64_t class_count = kDefaultClassCount;

  std::int64_t size() const { return labels.defined() ? labels.size(0) : 0; }
  bool empty() const { return size() == 0; }

  /// Throws DatasetError if any invariant is broken.
  void validate() const;

  LabeledDataset subset(const std::vector<std::int64_t>& indices) const;
  std::vector<std::int64_t> label_vector() const;
  std::vector<std::int64_t> origin_vector() const;
  std::vector<std::int64_t> class_histogram() const;
  /// Classes with at least one sample, ascending.
  std::vector<std::int64_t> present_classes() const;
};

/// Builds and validates a dataset. When `origin` is undefined it defaults to
/// 0..N-1.
LabeledDataset make_dataset(torch::Tensor features, torch::Tensor labels,
                            std::int64_t class_count = kDefaultClassCount,
                            torch::Tensor origin = {});

LabeledDataset empty_dataset(std::int64_t class_count = kDefaultClassCount);

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

/// Seeded permutation of the rows.
LabeledDataset shuffled(const LabeledDataset& ds, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Loading

enum class DatasetId { mnist, fashion_mnist };
enum class Split { train, test };

DatasetId parse_dataset_id(std::string_view name);
std::string to_string(DatasetId id);
std::string to_string(Split split);

/// FEDCLEAN_DATA_DIR if set, otherwise $HOME/.cache/fedclean.
std::filesystem::path default_cache_dir();

/// `<cache_dir>/<dataset>/<split>-{images,labels}.idx`
std::filesystem::path images_path(const std::filesystem::path& cache_dir, DatasetId id, Split split);
std::filesystem::path labels_path(const std::filesystem::path& cache_dir, DatasetId id, Split split);

/// Makes sure all four IDX files of `id` exist in the cache and match their
/// pinned SHA-256 digests, downloading and converting them when missing.
/// Guarded by an exclusive lock file inside the dataset directory.
void ensure_dataset(DatasetId id, const std::filesystem::path& cache_dir);

/// Loads a split, fetching it on first use. Features are scaled to [0, 1].
LabeledDataset load_dataset(DatasetId id, Split split,
                            const std::filesystem::path& cache_dir = default_cache_dir());

/// Lowercase hex SHA-256 of a file.
std::string sha256_file(const std::filesystem::path& path);

// IDX (big-endian) reading and writing. Images use magic 0x00000803 and
// labels 0x00000801, both with unsigned-byte payloads.
struct IdxImages {
  std::int64_t count = 0;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// Writes a dataset as an IDX image/label pair (features quantized to bytes).
void export_idx(const LabeledDataset& ds, const std::filesystem::path& images,
                const std::filesystem::path& labels);

// ---------------------------------------------------------------------------
// Partitioning

struct ClientPartition {
  std::vector<LabeledDataset> client_datasets;
  /// Samples removed from each client because their label is in its missing
  /// set. Only ever used as noise feedstock.
  std::vector<LabeledDataset> reserve_pools;
  std::vector<std::vector<std::int64_t>> missing_classes;
  std::uint64_t seed = 0;
};

/// Seeded equal-size random split into `num_clients` shards, then removal of
/// `missing_per_client` randomly chosen classes from each shard.
ClientPartition partition_clients(const LabeledDataset& ds, std::int64_t num_clients,
                                  std::int64_t missing_per_client, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Noise injection

struct NoiseSpec {
  double rho = 0.0;
  std::vector<std::int64_t> missing;
  std::uint64_t seed = 0;
};

/// How many valid and noise samples inject_noise keeps for the given sizes.
struct NoiseBudget {
  std::int64_t n_valid = 0;
  std::int64_t n_noise = 0;
  bool trimmed_valid = false;  // true when the non-valid pool was the limit
};

NoiseBudget noise_budget(double rho, std::int64_t valid_count, std::int64_t nonvalid_count);

/// Mixes images of missing classes, relabeled with labels drawn from the
/// valid set's empirical distribution, into the valid set so that the noise
/// fraction is rho (up to integer flooring).
LabeledDataset inject_noise(const LabeledDataset& valid, const LabeledDataset& nonvalid,
                            const NoiseSpec& spec);

}  // namespace fedclean::datakit

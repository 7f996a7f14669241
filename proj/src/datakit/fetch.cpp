#include "fedclean/datakit.hpp"

#include <curl/curl.h>
#include <fcntl.h>
#include <spdlog/spdlog.h>
#include <sys/file.h>
#include <unistd.h>
#include <zlib.h>

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <json.hpp>

namespace fedclean::datakit {

namespace {

// Both datasets are fetched as npm package tarballs: the registry is the one
// widely mirrored host that carries complete copies of them.
struct Source {
  const char* url;
};

constexpr Source kMnistSource{"https://registry.npmjs.org/mnist-data/-/mnist-data-1.2.6.tgz"};
constexpr Source kFashionSource{"https://registry.npmjs.org/fashion-mnist/-/fashion-mnist-1.1.0.tgz"};

struct PinnedFile {
  DatasetId id;
  Split split;
  bool images;
  const char* sha256;
};

// Digests of the cached IDX files. For MNIST these are the canonical
// uncompressed distribution files; Fashion-MNIST files are produced by
// install_fashion below.
constexpr std::array<PinnedFile, 8> kPinned{{
    {DatasetId::mnist, Split::train, true,
     "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"},
    {DatasetId::mnist, Split::train, false,
     "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"},
    {DatasetId::mnist, Split::test, true,
     "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"},
    {DatasetId::mnist, Split::test, false,
     "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"},
    {DatasetId::fashion_mnist, Split::train, true,
     "646b27d85ceafcb0a1efec88c397a5357446e24857f74351bc4818be57b71140"},
    {DatasetId::fashion_mnist, Split::train, false,
     "42d8a31792fb59dcec85b8e5b62bd03598c1a96f4edffe6f6a3e95daac9319ef"},
    {DatasetId::fashion_mnist, Split::test, true,
     "31baa4e3c9916b5a569f4767c0d0dac570900261da8cfa364a784c38e58b68f7"},
    {DatasetId::fashion_mnist, Split::test, false,
     "2a4fb3eec0877aa3d4ab80d8f59374733af9b2b2966e8be0e50efe715f443a4d"},
}};

std::filesystem::path pinned_path(const std::filesystem::path& cache_dir, const PinnedFile& f) {
  return f.images ? images_path(cache_dir, f.id, f.split) : labels_path(cache_dir, f.id, f.split);
}

/// Returns true when every file is present with the right digest. Throws on a
/// present-but-wrong file, since that is corruption rather than a cold cache.
bool cache_complete(DatasetId id, const std::filesystem::path& cache_dir, bool throw_on_mismatch) {
  bool complete = true;
  for (const auto& f : kPinned) {
    if (f.id != id) {
      continue;
    }
    const auto path = pinned_path(cache_dir, f);
    if (!std::filesystem::exists(path)) {
      complete = false;
      continue;
    }
    const auto digest = sha256_file(path);
    if (digest != f.sha256) {
      if (throw_on_mismatch) {
        throw DatasetError("checksum mismatch for " + path.string() + ": got " + digest +
                           ", expected " + f.sha256);
      }
      complete = false;
    }
  }
  return complete;
}

class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path)
      : fd_(::open(path.c_str(), O_CREAT | O_RDWR, 0644)) {
    if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) {
      throw DatasetError("cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_;
};

std::size_t append_to_buffer(char* data, std::size_t size, std::size_t nmemb, void* user) {
  auto* buf = static_cast<std::vector<std::uint8_t>*>(user);
  buf->insert(buf->end(), data, data + size * nmemb);
  return size * nmemb;
}

std::vector<std::uint8_t> http_get(const std::string& url) {
  static const bool curl_ready = curl_global_init(CURL_GLOBAL_DEFAULT) == CURLE_OK;
  if (!curl_ready) {
    throw DatasetError("libcurl initialization failed");
  }
  std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(), &curl_easy_cleanup);
  if (!curl) {
    throw DatasetError("curl_easy_init failed");
  }
  std::vector<std::uint8_t> body;
  curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_FAILONERROR, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_CONNECTTIMEOUT, 30L);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, &append_to_buffer);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, &body);
  if (const auto rc = curl_easy_perform(curl.get()); rc != CURLE_OK) {
    throw DatasetError("download of " + url + " failed: " + curl_easy_strerror(rc));
  }
  return body;
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> compressed) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw DatasetError("inflateInit2 failed");
  }
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk{};
  zs.next_in = const_cast<Bytef*>(compressed.data());
  zs.avail_in = static_cast<uInt>(compressed.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = chunk.size();
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DatasetError("gzip stream is corrupt");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

/// Extracts regular-file members of a ustar archive by name.
std::map<std::string, std::vector<std::uint8_t>> untar(std::span<const std::uint8_t> tar) {
  std::map<std::string, std::vector<std::uint8_t>> files;
  std::size_t pos = 0;
  while (pos + 512 <= tar.size()) {
    const auto* header = reinterpret_cast<const char*>(tar.data() + pos);
    if (header[0] == '\0') {
      break;
    }
    std::string name(header, strnlen(header, 100));
    const std::string prefix(header + 345, strnlen(header + 345, 155));
    if (!prefix.empty()) {
      name = prefix + "/" + name;
    }
    const std::string size_field(header + 124, strnlen(header + 124, 12));
    const auto size = static_cast<std::size_t>(std::stoull(size_field, nullptr, 8));
    const char type = header[156];
    pos += 512;
    if (pos + size > tar.size()) {
      throw DatasetError("tar archive is truncated");
    }
    if (type == '0' || type == '\0') {
      files.emplace(name, std::vector<std::uint8_t>(tar.begin() + static_cast<std::ptrdiff_t>(pos),
                                                    tar.begin() + static_cast<std::ptrdiff_t>(pos + size)));
    }
    pos += (size + 511) / 512 * 512;
  }
  return files;
}

const std::vector<std::uint8_t>& member(const std::map<std::string, std::vector<std::uint8_t>>& files,
                                        const std::string& name) {
  const auto it = files.find(name);
  if (it == files.end()) {
    throw DatasetError("archive has no member " + name);
  }
  return it->second;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DatasetError("write failed for " + path.string());
  }
}

void install_mnist(const std::filesystem::path& cache_dir) {
  const auto files = untar(gunzip(http_get(kMnistSource.url)));
  const std::string base = "package/data/";
  const auto dir = cache_dir / to_string(DatasetId::mnist);
  for (const auto split : {Split::train, Split::test}) {
    const std::string stem = split == Split::train ? "train" : "t10k";
    const auto& images = member(files, base + stem + "-images-idx3-ubyte");
    const auto& labels = member(files, base + stem + "-labels-idx1-ubyte");
    parse_idx_images(images);  // structural check before installing
    parse_idx_labels(labels);
    write_bytes(images_path(cache_dir, DatasetId::mnist, split), images);
    write_bytes(labels_path(cache_dir, DatasetId::mnist, split), labels);
  }
}

// The Fashion-MNIST package stores each class as a JSON array of 784-value
// rows: the class's 1000 test images followed by its 6000 training images,
// with occasional empty separator rows. Rows are interleaved class by class
// so the resulting IDX files are not label-sorted.
void install_fashion(const std::filesystem::path& cache_dir) {
  constexpr std::size_t kTestPerClass = 1000;
  constexpr std::size_t kTrainPerClass = 6000;
  constexpr std::size_t kPixels = kImageSide * kImageSide;
  const auto files = untar(gunzip(http_get(kFashionSource.url)));

  std::vector<std::vector<std::vector<std::uint8_t>>> rows(kDefaultClassCount);
  for (std::int64_t c = 0; c < kDefaultClassCount; ++c) {
    const auto& raw = member(files, "package/src/clothes/" + std::to_string(c) + ".json");
    const auto doc = nlohmann::json::parse(raw.begin(), raw.end());
    for (const auto& row : doc.at("data")) {
      if (row.empty()) {
        continue;
      }
      if (row.size() != kPixels) {
        throw DatasetError("fashion-mnist row with " + std::to_string(row.size()) + " pixels");
      }
      rows[static_cast<std::size_t>(c)].push_back(row.get<std::vector<std::uint8_t>>());
    }
    if (rows[static_cast<std::size_t>(c)].size() != kTestPerClass + kTrainPerClass) {
      throw DatasetError("fashion-mnist class " + std::to_string(c) + " has " +
                         std::to_string(rows[static_cast<std::size_t>(c)].size()) + " images");
    }
  }

  const auto emit = [&](Split split, std::size_t begin, std::size_t count) {
    IdxImages images;
    images.count = static_cast<std::int64_t>(count * kDefaultClassCount);
    images.rows = kImageSide;
    images.cols = kImageSide;
    images.pixels.reserve(static_cast<std::size_t>(images.count) * kPixels);
    std::vector<std::uint8_t> labels;
    for (std::size_t i = begin; i < begin + count; ++i) {
      for (std::size_t c = 0; c < rows.size(); ++c) {
        images.pixels.insert(images.pixels.end(), rows[c][i].begin(), rows[c][i].end());
        labels.push_back(static_cast<std::uint8_t>(c));
      }
    }
    write_idx_images(images_path(cache_dir, DatasetId::fashion_mnist, split), images);
    write_idx_labels(labels_path(cache_dir, DatasetId::fashion_mnist, split), labels);
  };
  emit(Split::test, 0, kTestPerClass);
  emit(Split::train, kTestPerClass, kTrainPerClass);
}

}  // namespace

void ensure_dataset(DatasetId id, const std::filesystem::path& cache_dir) {
  const auto dir = cache_dir / to_string(id);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw DatasetError("cannot create cache directory " + dir.string() + ": " + ec.message());
  }
  FileLock lock(dir / ".lock");
  if (cache_complete(id, cache_dir, false)) {
    return;
  }
  spdlog::info("fetching {} into {}", to_string(id), dir.string());
  if (id == DatasetId::mnist) {
    install_mnist(cache_dir);
  } else {
    install_fashion(cache_dir);
  }
  cache_complete(id, cache_dir, true);
}

}  // namespace fedclean::datakit

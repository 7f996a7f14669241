#include "fedclean/models.hpp"

#include <fstream>

namespace fedclean::models {

namespace {

constexpr char kMagic[8] = {'F', 'C', 'K', 'P', 'T', '0', '0', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) {
    throw ModelError("truncated checkpoint");
  }
  return v;
}

}  // namespace

std::string architecture_signature(const std::string& kind, const ModelWeights& w) {
  return kind + "|" + shape_signature(w);
}

void save_checkpoint(const std::filesystem::path& path, const ModelWeights& w,
                     const std::string& signature) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ModelError("cannot write checkpoint " + path.string());
  }
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(signature.size()));
  out.write(signature.data(), static_cast<std::streamsize>(signature.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(w.size()));
  for (const auto& a : w.arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.dim()));
    for (auto d : a.sizes()) {
      put<std::int64_t>(out, d);
    }
    auto f = a.to(torch::kFloat32).contiguous();
    out.write(reinterpret_cast<const char*>(f.data_ptr<float>()),
              static_cast<std::streamsize>(f.numel() * sizeof(float)));
  }
  if (!out) {
    throw ModelError("write failed for " + path.string());
  }
}

ModelWeights load_checkpoint(const std::filesystem::path& path, const std::string& expected_signature) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ModelError("cannot open checkpoint " + path.string());
  }
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw ModelError(path.string() + " is not a checkpoint");
  }
  const auto sig_len = get<std::uint32_t>(in);
  std::string sig(sig_len, '\0');
  in.read(sig.data(), sig_len);
  if (!expected_signature.empty() && sig != expected_signature) {
    throw ModelError("checkpoint signature mismatch: file has '" + sig + "', expected '" +
                     expected_signature + "'");
  }
  const auto count = get<std::uint32_t>(in);
  ModelWeights w;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto rank = get<std::uint32_t>(in);
    std::vector<std::int64_t> shape(rank);
    for (auto& d : shape) {
      d = get<std::int64_t>(in);
    }
    auto t = torch::empty(shape, torch::kFloat32);
    in.read(reinterpret_cast<char*>(t.data_ptr<float>()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) {
      throw ModelError("truncated checkpoint payload at array " + std::to_string(i));
    }
    w.arrays.push_back(t.to(torch::kFloat64));
  }
  return w;
}

}  // namespace fedclean::models

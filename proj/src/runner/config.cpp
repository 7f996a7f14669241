#include "fedclean/runner.hpp"

#include "fedclean/seed.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace fedclean::runner {

namespace {

const std::vector<std::pair<Variant, std::string>>& variant_names() {
  static const std::vector<std::pair<Variant, std::string>> names{
      {Variant::CleanAvg, "CleanAvg"},       {Variant::CleanProx, "CleanProx"},
      {Variant::GenCleanAvg, "GenCleanAvg"}, {Variant::GenCleanProx, "GenCleanProx"},
      {Variant::FedAvgNoisy, "FedAvgNoisy"}, {Variant::FedProxNoisy, "FedProxNoisy"}};
  return names;
}

template <typename T>
std::vector<T> scalar_or_list(const YAML::Node& node) {
  std::vector<T> out;
  if (node.IsSequence()) {
    for (const auto& item : node) {
      out.push_back(item.as<T>());
    }
  } else {
    out.push_back(node.as<T>());
  }
  return out;
}

void reject_unknown(const YAML::Node& node, const std::set<std::string>& known, const std::string& where) {
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!known.contains(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& target) {
  if (node[key]) {
    target = node[key].as<T>();
  }
}

}  // namespace

VariantFlags flags_of(Variant v) {
  switch (v) {
    case Variant::CleanAvg:
      return {true, false, fedcore::Algorithm::fedavg};
    case Variant::CleanProx:
      return {true, false, fedcore::Algorithm::fedprox};
    case Variant::GenCleanAvg:
      return {true, true, fedcore::Algorithm::fedavg};
    case Variant::GenCleanProx:
      return {true, true, fedcore::Algorithm::fedprox};
    case Variant::FedAvgNoisy:
      return {false, false, fedcore::Algorithm::fedavg};
    case Variant::FedProxNoisy:
      return {false, false, fedcore::Algorithm::fedprox};
  }
  throw ConfigError("unknown variant");
}

Variant parse_variant(const std::string& name) {
  auto norm = [](std::string s) {
    std::string out;
    for (char c : s) {
      if (std::isalnum(static_cast<unsigned char>(c))) {
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      }
    }
    return out;
  };
  const auto want = norm(name);
  for (const auto& [v, n] : variant_names()) {
    if (norm(n) == want) {
      return v;
    }
  }
  // also accept "FedAvg (Noisy)"
  if (want == "fedavg") {
    return Variant::FedAvgNoisy;
  }
  if (want == "fedprox") {
    return Variant::FedProxNoisy;
  }
  throw ConfigError("unknown variant '" + name + "'");
}

std::string to_string(Variant v) {
  for (const auto& [k, n] : variant_names()) {
    if (k == v) {
      return n;
    }
  }
  return "?";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> all{Variant::CleanAvg,    Variant::CleanProx,
                                        Variant::GenCleanAvg, Variant::GenCleanProx,
                                        Variant::FedAvgNoisy, Variant::FedProxNoisy};
  return all;
}

void ExperimentConfig::validate() const {
  if (datasets.empty() || variants.empty() || noise_ratios.empty() || missing_counts.empty()) {
    throw ConfigError("datasets, variants, noise_ratios and missing_counts must be non-empty");
  }
  for (double r : noise_ratios) {
    if (!(r >= 0.0 && r < 1.0)) {
      throw ConfigError("noise ratios must lie in [0, 1)");
    }
  }
  for (auto m : missing_counts) {
    if (m < 0 || m >= datakit::kDefaultClassCount) {
      throw ConfigError("missing counts must lie in [0, 10)");
    }
  }
  if (num_clients < 1 || samples_per_client < 1 || repetitions < 1) {
    throw ConfigError("num_clients, samples_per_client and repetitions must be positive");
  }
  if (validation_size < 1) {
    throw ConfigError("validation_size must be positive");
  }
  if (num_clients * samples_per_client + validation_size > 60000) {
    throw ConfigError("clients plus validation exceed the 60000-image training split");
  }
  if (cleaning_folds < 2 || cleaning_epochs < 1) {
    throw ConfigError("cleaning needs at least 2 folds and 1 epoch");
  }
  fed.validate();
  gan.validate();
}

std::filesystem::path ExperimentConfig::cache_dir() const {
  return data_dir.empty() ? datakit::default_cache_dir() : data_dir;
}

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("invalid YAML: ") + e.what());
  }
  ExperimentConfig cfg;
  if (!root || root.IsNull()) {
    cfg.validate();
    return cfg;
  }
  if (!root.IsMap()) {
    throw ConfigError("config must be a mapping");
  }
  reject_unknown(root,
                 {"dataset", "datasets", "variant", "variants", "noise_ratios", "noise", "missing_counts",
                  "missing", "num_clients", "samples_per_client", "validation_size", "repetitions",
                  "seed", "rounds", "fed", "gan", "cleaning", "output_dir", "data_dir",
                  "record_runtime", "write_round_logs", "write_plots"},
                 "config");
  try {
    for (const char* key : {"dataset", "datasets"}) {
      if (root[key]) {
        cfg.datasets.clear();
        for (const auto& s : scalar_or_list<std::string>(root[key])) {
          cfg.datasets.push_back(datakit::parse_dataset_id(s));
        }
      }
    }
    for (const char* key : {"variant", "variants"}) {
      if (root[key]) {
        cfg.variants.clear();
        for (const auto& s : scalar_or_list<std::string>(root[key])) {
          if (s == "all") {
            cfg.variants = all_variants();
            break;
          }
          cfg.variants.push_back(parse_variant(s));
        }
      }
    }
    for (const char* key : {"noise_ratios", "noise"}) {
      if (root[key]) {
        cfg.noise_ratios = scalar_or_list<double>(root[key]);
      }
    }
    for (const char* key : {"missing_counts", "missing"}) {
      if (root[key]) {
        cfg.missing_counts = scalar_or_list<std::int64_t>(root[key]);
      }
    }
    read(root, "num_clients", cfg.num_clients);
    read(root, "samples_per_client", cfg.samples_per_client);
    read(root, "validation_size", cfg.validation_size);
    read(root, "repetitions", cfg.repetitions);
    read(root, "seed", cfg.seed);
    read(root, "rounds", cfg.fed.rounds);
    if (root["output_dir"]) {
      cfg.output_dir = root["output_dir"].as<std::string>();
    }
    if (root["data_dir"]) {
      cfg.data_dir = root["data_dir"].as<std::string>();
    }
    read(root, "record_runtime", cfg.record_runtime);
    read(root, "write_round_logs", cfg.write_round_logs);
    read(root, "write_plots", cfg.write_plots);

    if (const auto f = root["fed"]) {
      reject_unknown(f,
                     {"rounds", "mu", "patience", "tolerance", "base_lr", "lr_decay_rate",
                      "lr_decay_steps", "clip_norm", "batch_size", "local_epochs"},
                     "fed");
      read(f, "rounds", cfg.fed.rounds);
      read(f, "mu", cfg.fed.mu);
      read(f, "patience", cfg.fed.patience);
      read(f, "tolerance", cfg.fed.tolerance);
      read(f, "base_lr", cfg.fed.base_lr);
      read(f, "lr_decay_rate", cfg.fed.lr_decay_rate);
      read(f, "lr_decay_steps", cfg.fed.lr_decay_steps);
      read(f, "clip_norm", cfg.fed.clip_norm);
      read(f, "batch_size", cfg.fed.batch_size);
      read(f, "local_epochs", cfg.fed.local_epochs);
    }
    if (const auto g = root["gan"]) {
      reject_unknown(g,
                     {"epochs", "mu", "batch_size", "lr_generator", "lr_discriminator", "beta1",
                      "beta2", "mismatch_weight", "label_encoding"},
                     "gan");
      read(g, "epochs", cfg.gan.epochs);
      read(g, "mu", cfg.gan.mu);
      read(g, "batch_size", cfg.gan.batch_size);
      read(g, "lr_generator", cfg.gan.lr_generator);
      read(g, "lr_discriminator", cfg.gan.lr_discriminator);
      read(g, "beta1", cfg.gan.beta1);
      read(g, "beta2", cfg.gan.beta2);
      read(g, "mismatch_weight", cfg.gan.mismatch_weight);
      if (g["label_encoding"]) {
        cfg.gan.spec.encoding = models::parse_label_encoding(g["label_encoding"].as<std::string>());
      }
    }
    if (const auto c = root["cleaning"]) {
      reject_unknown(c, {"folds", "epochs", "cluster_k"}, "cleaning");
      read(c, "folds", cfg.cleaning_folds);
      read(c, "epochs", cfg.cleaning_epochs);
      read(c, "cluster_k", cfg.cluster_k);
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  for (auto d : cfg.datasets) {
    j["datasets"].push_back(datakit::to_string(d));
  }
  for (auto v : cfg.variants) {
    j["variants"].push_back(to_string(v));
  }
  j["noise_ratios"] = cfg.noise_ratios;
  j["missing_counts"] = cfg.missing_counts;
  j["num_clients"] = cfg.num_clients;
  j["samples_per_client"] = cfg.samples_per_client;
  j["validation_size"] = cfg.validation_size;
  j["repetitions"] = cfg.repetitions;
  j["seed"] = cfg.seed;
  j["fed"] = {{"rounds", cfg.fed.rounds},         {"mu", cfg.fed.mu},
              {"patience", cfg.fed.patience},     {"tolerance", cfg.fed.tolerance},
              {"base_lr", cfg.fed.base_lr},       {"lr_decay_rate", cfg.fed.lr_decay_rate},
              {"lr_decay_steps", cfg.fed.lr_decay_steps}, {"clip_norm", cfg.fed.clip_norm},
              {"batch_size", cfg.fed.batch_size}, {"local_epochs", cfg.fed.local_epochs}};
  j["gan"] = {{"epochs", cfg.gan.epochs},
              {"mu", cfg.gan.mu},
              {"batch_size", cfg.gan.batch_size},
              {"lr_generator", cfg.gan.lr_generator},
              {"lr_discriminator", cfg.gan.lr_discriminator},
              {"beta1", cfg.gan.beta1},
              {"beta2", cfg.gan.beta2},
              {"mismatch_weight", cfg.gan.mismatch_weight},
              {"label_encoding", models::to_string(cfg.gan.spec.encoding)}};
  j["cleaning"] = {{"folds", cfg.cleaning_folds}, {"epochs", cfg.cleaning_epochs},
                   {"cluster_k", cfg.cluster_k}};
  return j;
}

std::uint64_t repetition_seed(const ExperimentConfig& cfg, datakit::DatasetId dataset, std::int64_t rep) {
  return derive_seed(cfg.seed, {seed_tag(datakit::to_string(dataset)), static_cast<std::uint64_t>(rep)});
}

}  // namespace fedclean::runner

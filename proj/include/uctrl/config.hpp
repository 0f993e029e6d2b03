#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "uctrl/data.hpp"
#include "uctrl/io.hpp"
#include "uctrl/rate.hpp"
#include "uctrl/trainer.hpp"

namespace uctrl::cli {

enum class DatasetKind { synthetic, cifar10, ucds };

inline DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "synthetic") return DatasetKind::synthetic;
  if (s == "cifar10") return DatasetKind::cifar10;
  if (s == "ucds") return DatasetKind::ucds;
  throw InvalidConfig("unknown dataset kind: " + s);
}

inline const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::synthetic: return "synthetic";
    case DatasetKind::cifar10: return "cifar10";
    case DatasetKind::ucds: return "ucds";
  }
  return "?";
}

// Full declarative description of one run. Flat `key = value` text format
// with section prefixes; '#' starts a comment.
struct ExperimentConfig {
  uint64_t seed = 1;
  std::string out = "out";

  // dataset.*
  DatasetKind dataset_kind = DatasetKind::synthetic;
  int dataset_dim = 16;
  int dataset_classes = 3;
  int dataset_per_class_dim = 1;
  int dataset_train_per_class = 200;
  int dataset_test_per_class = 100;
  double dataset_noise_sigma = 0.005;
  std::string dataset_path;
  std::string dataset_test_path;

  // aug.*
  data::AugmentationSpec aug;

  // model.*
  int model_feature_dim = 8;
  std::vector<int> model_hidden = {64, 64};
  int model_clusters = 3;

  // rate.*
  rate::RateParams rate_params;  // epsilon_sq = 0.2

  // train.*
  trainer::ObjectiveVariant variant;  // I, lambda = 30/30, cosine
  model::AdamParams train_adam;       // lr 1e-4, betas 0.5/0.999
  int train_batch_size = 128;
  uint64_t train_iterations = 2000;
  uint64_t train_checkpoint_every = 0;  // 0 = final only
  bool stop_grad_through_decoder = false;

  // cluster.*
  int cluster_steps = 2000;
  int cluster_batch_size = 0;  // 0 = full batch
  model::AdamParams cluster_adam;

  // probe.*
  int probe_steps = 1000;

  // generate.*
  int generate_rank = 4;
  int generate_components = 2;
  int generate_samples = 5;
  double generate_noise_scale = 0.1;
  double generate_t_span = 2.0;

  // ablate.*
  std::vector<trainer::VariantTag> ablate_variants;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline long long parse_int(const std::string& v, const std::string& key, int line) {
  try {
    size_t pos = 0;
    long long r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (...) {
    throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                      "' expects an integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& v, const std::string& key, int line) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (...) {
    throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                      "' expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, const std::string& key, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                    "' expects true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

}  // namespace detail

inline void validate_config(const ExperimentConfig& c);

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    auto hash = s.find('#');
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line) + ": expected key = value");
    std::string key = detail::trim(s.substr(0, eq));
    std::string val = detail::trim(s.substr(eq + 1));

    try {
      if (key == "seed") c.seed = static_cast<uint64_t>(detail::parse_int(val, key, line));
      else if (key == "out") c.out = val;
      else if (key == "dataset.kind") c.dataset_kind = dataset_kind_from_string(val);
      else if (key == "dataset.dim") c.dataset_dim = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "dataset.classes") c.dataset_classes = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "dataset.per_class_dim") c.dataset_per_class_dim = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "dataset.train_per_class") c.dataset_train_per_class = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "dataset.test_per_class") c.dataset_test_per_class = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "dataset.noise_sigma") c.dataset_noise_sigma = detail::parse_double(val, key, line);
      else if (key == "dataset.path") c.dataset_path = val;
      else if (key == "dataset.test_path") c.dataset_test_path = val;
      else if (key == "aug.kind") c.aug.kind = data::aug_kind_from_string(val);
      else if (key == "aug.count") c.aug.count = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "aug.scale_min") c.aug.scale_min = detail::parse_double(val, key, line);
      else if (key == "aug.scale_max") c.aug.scale_max = detail::parse_double(val, key, line);
      else if (key == "aug.sign_flip_prob") c.aug.sign_flip_prob = detail::parse_double(val, key, line);
      else if (key == "aug.noise_sigma") c.aug.noise_sigma = detail::parse_double(val, key, line);
      else if (key == "aug.max_angle") c.aug.max_angle = detail::parse_double(val, key, line);
      else if (key == "aug.image_c") c.aug.image_c = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "aug.image_h") c.aug.image_h = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "aug.image_w") c.aug.image_w = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "aug.max_shift") c.aug.max_shift = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "aug.flip_prob") c.aug.flip_prob = detail::parse_double(val, key, line);
      else if (key == "aug.brightness") c.aug.brightness = detail::parse_double(val, key, line);
      else if (key == "aug.renormalize") c.aug.renormalize = detail::parse_bool(val, key, line);
      else if (key == "model.feature_dim") c.model_feature_dim = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "model.hidden") {
        c.model_hidden.clear();
        for (const auto& item : detail::split_list(val))
          c.model_hidden.push_back(static_cast<int>(detail::parse_int(item, key, line)));
      } else if (key == "model.clusters") c.model_clusters = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "rate.epsilon_sq") c.rate_params.epsilon_sq = detail::parse_double(val, key, line);
      else if (key == "train.variant") c.variant.tag = trainer::variant_from_string(val);
      else if (key == "train.lambda1") c.variant.lambda1 = detail::parse_double(val, key, line);
      else if (key == "train.lambda2") c.variant.lambda2 = detail::parse_double(val, key, line);
      else if (key == "train.distance") c.variant.distance_mode = rate::distance_mode_from_string(val);
      else if (key == "train.lr") c.train_adam.lr = detail::parse_double(val, key, line);
      else if (key == "train.beta1") c.train_adam.beta1 = detail::parse_double(val, key, line);
      else if (key == "train.beta2") c.train_adam.beta2 = detail::parse_double(val, key, line);
      else if (key == "train.adam_eps") c.train_adam.eps = detail::parse_double(val, key, line);
      else if (key == "train.batch_size") c.train_batch_size = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "train.iterations") c.train_iterations = static_cast<uint64_t>(detail::parse_int(val, key, line));
      else if (key == "train.checkpoint_every") c.train_checkpoint_every = static_cast<uint64_t>(detail::parse_int(val, key, line));
      else if (key == "train.stop_grad_through_decoder") c.stop_grad_through_decoder = detail::parse_bool(val, key, line);
      else if (key == "cluster.steps") c.cluster_steps = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "cluster.batch_size") c.cluster_batch_size = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "cluster.lr") c.cluster_adam.lr = detail::parse_double(val, key, line);
      else if (key == "cluster.beta1") c.cluster_adam.beta1 = detail::parse_double(val, key, line);
      else if (key == "cluster.beta2") c.cluster_adam.beta2 = detail::parse_double(val, key, line);
      else if (key == "probe.steps") c.probe_steps = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "generate.rank") c.generate_rank = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "generate.components") c.generate_components = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "generate.samples") c.generate_samples = static_cast<int>(detail::parse_int(val, key, line));
      else if (key == "generate.noise_scale") c.generate_noise_scale = detail::parse_double(val, key, line);
      else if (key == "generate.t_span") c.generate_t_span = detail::parse_double(val, key, line);
      else if (key == "ablate.variants") {
        c.ablate_variants.clear();
        for (const auto& item : detail::split_list(val))
          c.ablate_variants.push_back(trainer::variant_from_string(item));
      } else {
        throw ConfigError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError("config line " + std::to_string(line) + ": key '" + key + "': " +
                        e.what());
    }
  }
  validate_config(c);
  return c;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  return parse_config(io::read_text(path));
}

inline void validate_config(const ExperimentConfig& c) {
  auto req = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  req(c.model_feature_dim >= 1, "model.feature_dim must be >= 1");
  req(!c.model_hidden.empty(), "model.hidden must list at least one width");
  for (int h : c.model_hidden) req(h >= 1, "model.hidden entries must be >= 1");
  req(c.model_clusters >= 1, "model.clusters must be >= 1");
  req(c.rate_params.epsilon_sq > 0.0, "rate.epsilon_sq must be > 0");
  req(c.variant.lambda1 >= 0.0 && c.variant.lambda2 >= 0.0, "lambdas must be >= 0");
  req(c.train_adam.lr > 0.0, "train.lr must be > 0");
  req(c.train_batch_size >= 1, "train.batch_size must be >= 1");
  req(c.cluster_steps >= 1, "cluster.steps must be >= 1");
  req(c.probe_steps >= 1, "probe.steps must be >= 1");
  req(c.generate_rank >= 1 && c.generate_components >= 1 && c.generate_samples >= 1,
      "generate.* counts must be >= 1");
  if (c.dataset_kind == DatasetKind::synthetic) {
    req(c.dataset_dim >= 1 && c.dataset_classes >= 1 && c.dataset_per_class_dim >= 1,
        "synthetic dataset dims must be >= 1");
    req(c.dataset_per_class_dim * c.dataset_classes <= c.dataset_dim,
        "dataset.classes * dataset.per_class_dim must be <= dataset.dim");
    req(c.dataset_train_per_class >= 1, "dataset.train_per_class must be >= 1");
    req(c.dataset_noise_sigma >= 0.0, "dataset.noise_sigma must be >= 0");
  } else {
    req(!c.dataset_path.empty(), "dataset.path required for non-synthetic datasets");
  }
}

// Canonical serialization; field order is fixed so hashing is stable.
inline std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "seed = " << c.seed << '\n';
  os << "out = " << c.out << '\n';
  os << "dataset.kind = " << to_string(c.dataset_kind) << '\n';
  os << "dataset.dim = " << c.dataset_dim << '\n';
  os << "dataset.classes = " << c.dataset_classes << '\n';
  os << "dataset.per_class_dim = " << c.dataset_per_class_dim << '\n';
  os << "dataset.train_per_class = " << c.dataset_train_per_class << '\n';
  os << "dataset.test_per_class = " << c.dataset_test_per_class << '\n';
  os << "dataset.noise_sigma = " << io::fmt(c.dataset_noise_sigma) << '\n';
  os << "dataset.path = " << c.dataset_path << '\n';
  os << "dataset.test_path = " << c.dataset_test_path << '\n';
  const char* aug_kind = "subspace_jitter";
  switch (c.aug.kind) {
    case data::AugKind::subspace_jitter: aug_kind = "subspace_jitter"; break;
    case data::AugKind::rotation_in_class_plane: aug_kind = "rotation_in_class_plane"; break;
    case data::AugKind::additive_noise: aug_kind = "additive_noise"; break;
    case data::AugKind::pixel_crop_flip: aug_kind = "pixel_crop_flip"; break;
  }
  os << "aug.kind = " << aug_kind << '\n';
  os << "aug.count = " << c.aug.count << '\n';
  os << "aug.scale_min = " << io::fmt(c.aug.scale_min) << '\n';
  os << "aug.scale_max = " << io::fmt(c.aug.scale_max) << '\n';
  os << "aug.sign_flip_prob = " << io::fmt(c.aug.sign_flip_prob) << '\n';
  os << "aug.noise_sigma = " << io::fmt(c.aug.noise_sigma) << '\n';
  os << "aug.max_angle = " << io::fmt(c.aug.max_angle) << '\n';
  os << "aug.image_c = " << c.aug.image_c << '\n';
  os << "aug.image_h = " << c.aug.image_h << '\n';
  os << "aug.image_w = " << c.aug.image_w << '\n';
  os << "aug.max_shift = " << c.aug.max_shift << '\n';
  os << "aug.flip_prob = " << io::fmt(c.aug.flip_prob) << '\n';
  os << "aug.brightness = " << io::fmt(c.aug.brightness) << '\n';
  os << "aug.renormalize = " << (c.aug.renormalize ? "true" : "false") << '\n';
  os << "model.feature_dim = " << c.model_feature_dim << '\n';
  os << "model.hidden = ";
  for (size_t i = 0; i < c.model_hidden.size(); ++i)
    os << (i ? "," : "") << c.model_hidden[i];
  os << '\n';
  os << "model.clusters = " << c.model_clusters << '\n';
  os << "rate.epsilon_sq = " << io::fmt(c.rate_params.epsilon_sq) << '\n';
  os << "train.variant = " << trainer::to_string(c.variant.tag) << '\n';
  os << "train.lambda1 = " << io::fmt(c.variant.lambda1) << '\n';
  os << "train.lambda2 = " << io::fmt(c.variant.lambda2) << '\n';
  os << "train.distance = " << rate::to_string(c.variant.distance_mode) << '\n';
  os << "train.lr = " << io::fmt(c.train_adam.lr) << '\n';
  os << "train.beta1 = " << io::fmt(c.train_adam.beta1) << '\n';
  os << "train.beta2 = " << io::fmt(c.train_adam.beta2) << '\n';
  os << "train.adam_eps = " << io::fmt(c.train_adam.eps) << '\n';
  os << "train.batch_size = " << c.train_batch_size << '\n';
  os << "train.iterations = " << c.train_iterations << '\n';
  os << "train.checkpoint_every = " << c.train_checkpoint_every << '\n';
  os << "train.stop_grad_through_decoder = " << (c.stop_grad_through_decoder ? "true" : "false")
     << '\n';
  os << "cluster.steps = " << c.cluster_steps << '\n';
  os << "cluster.batch_size = " << c.cluster_batch_size << '\n';
  os << "cluster.lr = " << io::fmt(c.cluster_adam.lr) << '\n';
  os << "cluster.beta1 = " << io::fmt(c.cluster_adam.beta1) << '\n';
  os << "cluster.beta2 = " << io::fmt(c.cluster_adam.beta2) << '\n';
  os << "probe.steps = " << c.probe_steps << '\n';
  os << "generate.rank = " << c.generate_rank << '\n';
  os << "generate.components = " << c.generate_components << '\n';
  os << "generate.samples = " << c.generate_samples << '\n';
  os << "generate.noise_scale = " << io::fmt(c.generate_noise_scale) << '\n';
  os << "generate.t_span = " << io::fmt(c.generate_t_span) << '\n';
  os << "ablate.variants = ";
  for (size_t i = 0; i < c.ablate_variants.size(); ++i)
    os << (i ? "," : "") << trainer::to_string(c.ablate_variants[i]);
  os << '\n';
  return os.str();
}

// FNV-1a over the canonical serialization restricted to the keys that
// determine a training run (and hence a checkpoint's contents). Post-hoc
// stage knobs (cluster.*, probe.*, generate.*, ablate.*) and the output
// directory do not invalidate a checkpoint.
inline uint64_t config_hash(const ExperimentConfig& c) {
  std::istringstream in(serialize_config(c));
  std::string line, filtered;
  auto run_local = [](const std::string& l) {
    for (const char* prefix : {"out = ", "cluster.", "probe.", "generate.", "ablate."})
      if (l.rfind(prefix, 0) == 0) return true;
    return false;
  };
  while (std::getline(in, line)) {
    if (run_local(line)) continue;
    filtered += line;
    filtered += '\n';
  }
  return uctrl::detail::fnv1a64(filtered);
}

}  // namespace uctrl::cli

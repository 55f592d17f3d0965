#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rrm/data.hpp"
#include "rrm/errors.hpp"
#include "rrm/hyperparams.hpp"
#include "rrm/losses_class_specific.hpp"
#include "rrm/trainer.hpp"

namespace rrm {

/// Full experiment description. Defaults reproduce the standard
/// hyperparameter set; everything is overridable from a flat `key = value`
/// config file or repeated `--set key=value` flags.
struct ExperimentConfig {
  // dataset.*
  std::string dataset_kind = "two_moons";  // two_moons | shapes | idx
  int dataset_n = 1000;
  double dataset_noise = 0.1;
  int dataset_size = 12;     // shapes: image side in pixels
  int dataset_classes = 4;   // shapes: glyph families
  std::string dataset_images;     // idx: image file
  std::string dataset_labels;     // idx: label file
  std::string dataset_cache_dir;  // idx: base dir for relative paths

  // split.*
  int n_labeled = 100;
  OverlapMode overlap_mode = OverlapMode::kOverlapping;
  double val_fraction = 0.1;
  double test_fraction = 0.2;

  // model.*
  int hidden1 = 32;
  int hidden2 = 32;
  int rep_dim = 16;

  Hyperparams hp;
  RankKind rank_kind = RankKind::kContrastive;
  OptimizerSettings opt;

  // aug.*
  double aug_noise_scale = 0.05;  // weak vector noise = scale * feature std
  int aug_shift_max = 2;
  double aug_flip_prob = 0.5;
  double aug_jitter_scale = 0.3;
  double aug_cutout_frac = 0.25;

  // train.*
  int epochs = 10;

  // run.*
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&);

  void validate() const {
    if (dataset_kind != "two_moons" && dataset_kind != "shapes" &&
        dataset_kind != "idx") {
      throw ConfigError(detail::msg("dataset.kind: unknown dataset '",
                                    dataset_kind, "'"));
    }
    if (dataset_n < 2) throw ConfigError("dataset.n must be >= 2");
    if (dataset_noise < 0.0) throw ConfigError("dataset.noise must be >= 0");
    if (dataset_kind == "shapes") {
      if (dataset_size < 8) throw ConfigError("dataset.size must be >= 8");
      if (dataset_classes < 2 || dataset_classes > 8) {
        throw ConfigError("dataset.classes must be in [2, 8]");
      }
    }
    if (dataset_kind == "idx" && (dataset_images.empty() || dataset_labels.empty())) {
      throw ConfigError("dataset.images and dataset.labels are required for dataset.kind = idx");
    }
    if (n_labeled < 1) throw ConfigError("split.n_labeled must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0) {
      throw ConfigError("split.val_fraction must be in [0, 1)");
    }
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
      throw ConfigError("split.test_fraction must be in [0, 1)");
    }
    if (hidden1 < 1 || hidden2 < 1 || rep_dim < 1) {
      throw ConfigError("model dims must be >= 1");
    }
    hp.validate();
    opt.validate();
    if (aug_noise_scale < 0.0 || aug_shift_max < 0 || aug_jitter_scale < 0.0) {
      throw ConfigError("aug knobs must be >= 0");
    }
    if (aug_flip_prob < 0.0 || aug_flip_prob > 1.0) {
      throw ConfigError("aug.flip_prob must be in [0, 1]");
    }
    if (aug_cutout_frac < 0.0 || aug_cutout_frac > 1.0) {
      throw ConfigError("aug.cutout_frac must be in [0, 1]");
    }
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  }
};

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  auto hp_eq = [](const Hyperparams& x, const Hyperparams& y) {
    return x.batch_size == y.batch_size && x.mu == y.mu && x.tau == y.tau &&
           x.margin == y.margin && x.temperature == y.temperature &&
           x.psi == y.psi && x.phi == y.phi && x.lambda_u == y.lambda_u &&
           x.lambda_r == y.lambda_r && x.lambda_s == y.lambda_s;
  };
  auto opt_eq = [](const OptimizerSettings& x, const OptimizerSettings& y) {
    return x.eta0 == y.eta0 && x.momentum == y.momentum &&
           x.weight_decay == y.weight_decay;
  };
  return a.dataset_kind == b.dataset_kind && a.dataset_n == b.dataset_n &&
         a.dataset_noise == b.dataset_noise && a.dataset_size == b.dataset_size &&
         a.dataset_classes == b.dataset_classes &&
         a.dataset_images == b.dataset_images &&
         a.dataset_labels == b.dataset_labels &&
         a.dataset_cache_dir == b.dataset_cache_dir &&
         a.n_labeled == b.n_labeled && a.overlap_mode == b.overlap_mode &&
         a.val_fraction == b.val_fraction && a.test_fraction == b.test_fraction &&
         a.hidden1 == b.hidden1 && a.hidden2 == b.hidden2 &&
         a.rep_dim == b.rep_dim && hp_eq(a.hp, b.hp) &&
         a.rank_kind == b.rank_kind && opt_eq(a.opt, b.opt) &&
         a.aug_noise_scale == b.aug_noise_scale &&
         a.aug_shift_max == b.aug_shift_max &&
         a.aug_flip_prob == b.aug_flip_prob &&
         a.aug_jitter_scale == b.aug_jitter_scale &&
         a.aug_cutout_frac == b.aug_cutout_frac && a.epochs == b.epochs &&
         a.seed == b.seed && a.out_dir == b.out_dir;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct KvContext {
  std::string key;
  std::string where;  // "line 3" or "--set flag"
};

[[noreturn]] inline void kv_error(const KvContext& ctx, const std::string& what) {
  throw ConfigError(msg(ctx.where, ": key '", ctx.key, "': ", what));
}

inline long long parse_ll(const std::string& v, const KvContext& ctx) {
  try {
    std::size_t pos = 0;
    long long out = std::stoll(v, &pos);
    if (pos != v.size()) kv_error(ctx, "expected integer, got '" + v + "'");
    return out;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    kv_error(ctx, "expected integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& v, const KvContext& ctx) {
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) kv_error(ctx, "expected real, got '" + v + "'");
    return out;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    kv_error(ctx, "expected real, got '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& v, const KvContext& ctx) {
  try {
    std::size_t pos = 0;
    unsigned long long out = std::stoull(v, &pos);
    if (pos != v.size()) kv_error(ctx, "expected unsigned integer, got '" + v + "'");
    return out;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    kv_error(ctx, "expected unsigned integer, got '" + v + "'");
  }
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Applies one `key = value` assignment. `where` names the source location
/// for error messages.
inline void apply_config_kv(ExperimentConfig& cfg, const std::string& key,
                            const std::string& value, const std::string& where) {
  detail::KvContext ctx{key, where};
  auto as_int = [&] { return static_cast<int>(detail::parse_ll(value, ctx)); };
  auto as_double = [&] { return detail::parse_double(value, ctx); };

  if (key == "dataset.kind") cfg.dataset_kind = value;
  else if (key == "dataset.n") cfg.dataset_n = as_int();
  else if (key == "dataset.noise") cfg.dataset_noise = as_double();
  else if (key == "dataset.size") cfg.dataset_size = as_int();
  else if (key == "dataset.classes") cfg.dataset_classes = as_int();
  else if (key == "dataset.images") cfg.dataset_images = value;
  else if (key == "dataset.labels") cfg.dataset_labels = value;
  else if (key == "dataset.cache_dir") cfg.dataset_cache_dir = value;
  else if (key == "split.n_labeled") cfg.n_labeled = as_int();
  else if (key == "split.overlap_mode") {
    if (value == "overlapping") cfg.overlap_mode = OverlapMode::kOverlapping;
    else if (value == "disjoint_classes") cfg.overlap_mode = OverlapMode::kDisjointClasses;
    else detail::kv_error(ctx, "expected overlapping|disjoint_classes, got '" + value + "'");
  }
  else if (key == "split.val_fraction") cfg.val_fraction = as_double();
  else if (key == "split.test_fraction") cfg.test_fraction = as_double();
  else if (key == "model.hidden1") cfg.hidden1 = as_int();
  else if (key == "model.hidden2") cfg.hidden2 = as_int();
  else if (key == "model.rep_dim") cfg.rep_dim = as_int();
  else if (key == "hp.B") cfg.hp.batch_size = as_int();
  else if (key == "hp.mu") cfg.hp.mu = as_int();
  else if (key == "hp.tau") cfg.hp.tau = as_double();
  else if (key == "hp.m") cfg.hp.margin = as_double();
  else if (key == "hp.T") cfg.hp.temperature = as_double();
  else if (key == "hp.psi") cfg.hp.psi = as_double();
  else if (key == "hp.phi") cfg.hp.phi = as_double();
  else if (key == "hp.lambda_u") cfg.hp.lambda_u = as_double();
  else if (key == "hp.lambda_r") cfg.hp.lambda_r = as_double();
  else if (key == "hp.lambda_s") cfg.hp.lambda_s = as_double();
  else if (key == "rank.kind") {
    if (value == "BM") cfg.rank_kind = RankKind::kBatchMeanTriplet;
    else if (value == "CT") cfg.rank_kind = RankKind::kContrastive;
    else detail::kv_error(ctx, "expected BM|CT, got '" + value + "'");
  }
  else if (key == "opt.eta0") cfg.opt.eta0 = as_double();
  else if (key == "opt.momentum") cfg.opt.momentum = as_double();
  else if (key == "opt.weight_decay") cfg.opt.weight_decay = as_double();
  else if (key == "aug.noise_scale") cfg.aug_noise_scale = as_double();
  else if (key == "aug.shift_max") cfg.aug_shift_max = as_int();
  else if (key == "aug.flip_prob") cfg.aug_flip_prob = as_double();
  else if (key == "aug.jitter_scale") cfg.aug_jitter_scale = as_double();
  else if (key == "aug.cutout_frac") cfg.aug_cutout_frac = as_double();
  else if (key == "train.epochs") cfg.epochs = as_int();
  else if (key == "run.seed") cfg.seed = detail::parse_u64(value, ctx);
  else if (key == "run.out") cfg.out_dir = value;
  else throw ConfigError(detail::msg(where, ": unknown key '", key, "'"));
}

/// Parses flat `key = value` config text. Blank lines and `#` comments are
/// skipped; unknown and duplicate keys are rejected with their line number.
/// The result is validated before return.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    const std::string where = detail::msg("line ", line_no);
    if (eq == std::string::npos) {
      throw ConfigError(detail::msg(where, ": expected 'key = value', got '",
                                    stripped, "'"));
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError(detail::msg(where, ": empty key"));
    if (!seen.insert(key).second) {
      throw ConfigError(detail::msg(where, ": duplicate key '", key, "'"));
    }
    apply_config_kv(cfg, key, value, where);
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(detail::msg("cannot open config file: ", path));
  std::ostringstream oss;
  oss << is.rdbuf();
  return parse_config_text(oss.str());
}

/// Applies one `key=value` override (the --set flag form).
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(detail::msg("--set expects key=value, got '", assignment, "'"));
  }
  apply_config_kv(cfg, detail::trim(assignment.substr(0, eq)),
                  detail::trim(assignment.substr(eq + 1)), "--set flag");
}

/// Canonical serialization; parse_config_text(serialize_config(c)) == c.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  auto d = detail::fmt_double;
  os << "dataset.kind = " << cfg.dataset_kind << "\n";
  os << "dataset.n = " << cfg.dataset_n << "\n";
  os << "dataset.noise = " << d(cfg.dataset_noise) << "\n";
  os << "dataset.size = " << cfg.dataset_size << "\n";
  os << "dataset.classes = " << cfg.dataset_classes << "\n";
  os << "dataset.images = " << cfg.dataset_images << "\n";
  os << "dataset.labels = " << cfg.dataset_labels << "\n";
  os << "dataset.cache_dir = " << cfg.dataset_cache_dir << "\n";
  os << "split.n_labeled = " << cfg.n_labeled << "\n";
  os << "split.overlap_mode = "
     << (cfg.overlap_mode == OverlapMode::kOverlapping ? "overlapping"
                                                       : "disjoint_classes")
     << "\n";
  os << "split.val_fraction = " << d(cfg.val_fraction) << "\n";
  os << "split.test_fraction = " << d(cfg.test_fraction) << "\n";
  os << "model.hidden1 = " << cfg.hidden1 << "\n";
  os << "model.hidden2 = " << cfg.hidden2 << "\n";
  os << "model.rep_dim = " << cfg.rep_dim << "\n";
  os << "hp.B = " << cfg.hp.batch_size << "\n";
  os << "hp.mu = " << cfg.hp.mu << "\n";
  os << "hp.tau = " << d(cfg.hp.tau) << "\n";
  os << "hp.m = " << d(cfg.hp.margin) << "\n";
  os << "hp.T = " << d(cfg.hp.temperature) << "\n";
  os << "hp.psi = " << d(cfg.hp.psi) << "\n";
  os << "hp.phi = " << d(cfg.hp.phi) << "\n";
  os << "hp.lambda_u = " << d(cfg.hp.lambda_u) << "\n";
  os << "hp.lambda_r = " << d(cfg.hp.lambda_r) << "\n";
  os << "hp.lambda_s = " << d(cfg.hp.lambda_s) << "\n";
  os << "rank.kind = "
     << (cfg.rank_kind == RankKind::kBatchMeanTriplet ? "BM" : "CT") << "\n";
  os << "opt.eta0 = " << d(cfg.opt.eta0) << "\n";
  os << "opt.momentum = " << d(cfg.opt.momentum) << "\n";
  os << "opt.weight_decay = " << d(cfg.opt.weight_decay) << "\n";
  os << "aug.noise_scale = " << d(cfg.aug_noise_scale) << "\n";
  os << "aug.shift_max = " << cfg.aug_shift_max << "\n";
  os << "aug.flip_prob = " << d(cfg.aug_flip_prob) << "\n";
  os << "aug.jitter_scale = " << d(cfg.aug_jitter_scale) << "\n";
  os << "aug.cutout_frac = " << d(cfg.aug_cutout_frac) << "\n";
  os << "train.epochs = " << cfg.epochs << "\n";
  os << "run.seed = " << cfg.seed << "\n";
  os << "run.out = " << cfg.out_dir << "\n";
  return os.str();
}

}  // namespace rrm

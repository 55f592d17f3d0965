#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rrm/config.hpp"
#include "rrm/data.hpp"
#include "rrm/trainer.hpp"

namespace rrm {

/// Builds the dataset a config describes. Generation seeds derive from the
/// run seed so a seed sweep also resamples the data.
inline Dataset build_dataset(const ExperimentConfig& cfg) {
  const std::uint64_t seed = derive_seed(cfg.seed, RngStream::kDataGen);
  if (cfg.dataset_kind == "two_moons") {
    return make_two_moons(static_cast<std::size_t>(cfg.dataset_n),
                          cfg.dataset_noise, seed);
  }
  if (cfg.dataset_kind == "shapes") {
    return make_shapes(static_cast<std::size_t>(cfg.dataset_n),
                       static_cast<std::size_t>(cfg.dataset_size),
                       cfg.dataset_classes, seed);
  }
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative() && !cfg.dataset_cache_dir.empty()) {
      return (std::filesystem::path(cfg.dataset_cache_dir) / path).string();
    }
    return p;
  };
  return load_idx(resolve(cfg.dataset_images), resolve(cfg.dataset_labels));
}

inline SslSplit build_split(const ExperimentConfig& cfg, const Dataset& ds) {
  return split_ssl(ds, static_cast<std::size_t>(cfg.n_labeled),
                   cfg.overlap_mode, derive_seed(cfg.seed, RngStream::kSplit),
                   cfg.val_fraction, cfg.test_fraction);
}

inline ModelParams build_model(const ExperimentConfig& cfg, const Dataset& ds,
                               const SslSplit& split) {
  const std::vector<std::size_t> dims = {
      ds.sample_numel(), static_cast<std::size_t>(cfg.hidden1),
      static_cast<std::size_t>(cfg.hidden2),
      static_cast<std::size_t>(cfg.rep_dim),
      static_cast<std::size_t>(split.head_classes)};
  return init_params(derive_seed(cfg.seed, RngStream::kModelInit), dims);
}

inline Augmenter build_augmenter(const ExperimentConfig& cfg, const Dataset& ds) {
  auto [weak, strong] =
      default_policies(ds, cfg.aug_noise_scale, cfg.aug_shift_max,
                       cfg.aug_flip_prob, cfg.aug_jitter_scale,
                       cfg.aug_cutout_frac);
  return Augmenter(ds, weak, strong);
}

/// Objective variant implied by the loss weights.
inline std::string run_mode(const ExperimentConfig& cfg) {
  const std::string kind =
      cfg.rank_kind == RankKind::kBatchMeanTriplet ? "bm" : "ct";
  if (cfg.hp.lambda_u == 0.0 && cfg.hp.lambda_r == 0.0 && cfg.hp.lambda_s == 0.0) {
    return "supervised-baseline";
  }
  if (cfg.hp.lambda_s == 0.0) return "rankingmatch-" + kind;
  return "rerankmatch-" + kind;
}

struct RunSummary {
  std::string mode;
  std::uint64_t seed = 0;
  std::size_t total_steps = 0;
  double final_test_error = 0.0;
  double final_validation_error = 0.0;
  std::vector<double> test_error_per_epoch;
  std::vector<double> val_error_per_epoch;
  std::string out_dir;
};

/// Runs data -> split -> train -> evaluate and writes metrics.csv,
/// summary.json, and checkpoint_final.bin into out_dir. Deterministic:
/// identical (config, seed) produce byte-identical metrics files.
inline RunSummary run_experiment(const ExperimentConfig& cfg,
                                 const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  Dataset ds = build_dataset(cfg);
  SslSplit split = build_split(cfg, ds);
  ModelParams params = build_model(cfg, ds, split);
  Augmenter aug = build_augmenter(cfg, ds);

  const std::size_t epoch_steps = steps_per_epoch(split, cfg.hp);
  const std::size_t total_steps =
      static_cast<std::size_t>(cfg.epochs) * epoch_steps;

  Trainer::Options opts;
  opts.hp = cfg.hp;
  opts.rank_kind = cfg.rank_kind;
  opts.opt = cfg.opt;
  opts.seed = cfg.seed;
  opts.total_steps = total_steps;
  Trainer trainer(ds, split, std::move(params), aug, opts);

  const std::string metrics_path =
      (std::filesystem::path(out_dir) / "metrics.csv").string();
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw Error(detail::msg("cannot open ", metrics_path));
  metrics << kMetricsCsvHeader << "\n";

  RunSummary summary;
  summary.mode = run_mode(cfg);
  summary.seed = cfg.seed;
  summary.total_steps = total_steps;
  summary.out_dir = out_dir;

  for (std::size_t k = 0; k < total_steps; ++k) {
    const StepRecord rec = trainer.step();
    metrics << step_record_csv(rec) << "\n";
    if ((k + 1) % epoch_steps == 0) {
      summary.test_error_per_epoch.push_back(trainer.test_error());
      summary.val_error_per_epoch.push_back(
          split.validation.empty() ? 0.0 : trainer.validation_error());
    }
  }
  metrics.close();

  summary.final_test_error = summary.test_error_per_epoch.back();
  summary.final_validation_error = summary.val_error_per_epoch.back();

  save_checkpoint(trainer.params(),
                  (std::filesystem::path(out_dir) / "checkpoint_final.bin").string());

  nlohmann::json j;
  j["mode"] = summary.mode;
  j["seed"] = summary.seed;
  j["total_steps"] = summary.total_steps;
  j["steps_per_epoch"] = epoch_steps;
  j["epochs"] = cfg.epochs;
  j["final_test_error"] = summary.final_test_error;
  j["final_validation_error"] = summary.final_validation_error;
  j["test_error_per_epoch"] = summary.test_error_per_epoch;
  j["val_error_per_epoch"] = summary.val_error_per_epoch;
  j["config"] = serialize_config(cfg);
  std::ofstream sj((std::filesystem::path(out_dir) / "summary.json").string());
  sj << j.dump(2) << "\n";

  return summary;
}

/// Forwards every sample of the dataset through a checkpoint and writes one
/// TSV row per sample: L2-normalized logits then the true label.
inline void export_embeddings(const std::string& checkpoint_path,
                              const Dataset& ds, const std::string& out_path) {
  ModelParams params = load_checkpoint(checkpoint_path);
  if (params.input_dim() != ds.sample_numel()) {
    throw ShapeError(detail::msg("export_embeddings: checkpoint expects d_in=",
                                 params.input_dim(), " but dataset samples have ",
                                 ds.sample_numel(), " features"));
  }
  const std::size_t n = ds.size(), d = ds.sample_numel();
  Tensor x({n, d});
  for (std::size_t i = 0; i < n * d; ++i) x[i] = ds.samples[i];
  const ForwardOutput out = forward(params, x);
  const Tensor& logits = out.logits->value;
  const std::size_t c = logits.cols();

  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw Error(detail::msg("cannot open ", out_path));
  for (std::size_t j = 0; j < c; ++j) os << "logit_" << j << "\t";
  os << "label\n";
  char buf[64];
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < c; ++j) norm += logits.at(i, j) * logits.at(i, j);
    norm = std::sqrt(norm);
    if (norm <= 1e-12) {
      throw DomainError(detail::msg("export_embeddings: zero-norm logits at row ", i));
    }
    for (std::size_t j = 0; j < c; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", logits.at(i, j) / norm);
      os << buf << "\t";
    }
    os << ds.labels[i] << "\n";
  }
}

struct SweepSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<double> test_errors;
  double mean_error = 0.0;
  double std_error = 0.0;
};

/// Repeats the experiment over several seeds and reports mean +- std of the
/// final test error (sample standard deviation).
inline SweepSummary sweep(const ExperimentConfig& base,
                          const std::vector<std::uint64_t>& seeds,
                          const std::string& out_dir) {
  if (seeds.empty()) throw ConfigError("sweep: need at least one seed");
  SweepSummary s;
  s.seeds = seeds;
  for (std::uint64_t seed : seeds) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    const std::string run_dir =
        (std::filesystem::path(out_dir) / ("seed_" + std::to_string(seed)))
            .string();
    s.test_errors.push_back(run_experiment(cfg, run_dir).final_test_error);
  }
  double mean = 0.0;
  for (double e : s.test_errors) mean += e;
  mean /= static_cast<double>(s.test_errors.size());
  double var = 0.0;
  for (double e : s.test_errors) var += (e - mean) * (e - mean);
  s.mean_error = mean;
  s.std_error = s.test_errors.size() > 1
                    ? std::sqrt(var / static_cast<double>(s.test_errors.size() - 1))
                    : 0.0;

  nlohmann::json j;
  j["seeds"] = s.seeds;
  j["test_errors"] = s.test_errors;
  j["mean_error"] = s.mean_error;
  j["std_error"] = s.std_error;
  j["mode"] = run_mode(base);
  std::filesystem::create_directories(out_dir);
  std::ofstream os((std::filesystem::path(out_dir) / "sweep_summary.json").string());
  os << j.dump(2) << "\n";
  return s;
}

}  // namespace rrm

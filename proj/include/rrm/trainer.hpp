#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "rrm/augment.hpp"
#include "rrm/data.hpp"
#include "rrm/hyperparams.hpp"
#include "rrm/losses_class_specific.hpp"
#include "rrm/losses_semantic.hpp"
#include "rrm/model.hpp"

namespace rrm {

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct OptimizerSettings {
  double eta0 = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  void validate() const {
    if (eta0 <= 0.0) throw ConfigError("opt.eta0 must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) {
      throw ConfigError("opt.momentum must be in [0, 1)");
    }
    if (weight_decay < 0.0) throw ConfigError("opt.weight_decay must be >= 0");
  }
};

/// SGD-with-momentum state: one velocity buffer per parameter, in
/// ModelParams::all() order.
struct OptimizerState {
  std::vector<Tensor> velocity;
  double momentum = 0.9;
  double eta0 = 0.03;
  double weight_decay = 5e-4;

  static OptimizerState init(const ModelParams& params,
                             const OptimizerSettings& opt) {
    opt.validate();
    OptimizerState st;
    st.momentum = opt.momentum;
    st.eta0 = opt.eta0;
    st.weight_decay = opt.weight_decay;
    for (const ad::NodePtr& p : params.all()) {
      st.velocity.push_back(Tensor::zeros(p->value.shape()));
    }
    return st;
  }
};

/// Cosine learning-rate decay over 7/16 of a period: eta0 * cos(7*pi*k/(16*K)).
inline double cosine_lr(std::size_t k, std::size_t total_steps, double eta0) {
  if (total_steps == 0 || k > total_steps) {
    throw ContractError(detail::msg("cosine_lr: need 0 <= k <= K with K > 0, got k=",
                                    k, " K=", total_steps));
  }
  return eta0 * std::cos(7.0 * std::numbers::pi * static_cast<double>(k) /
                         (16.0 * static_cast<double>(total_steps)));
}

/// One optimizer step: v <- momentum*v + g + wd*theta; theta <- theta - eta*v.
/// Aborts with a diagnostic naming the parameter if its gradient is missing
/// or non-finite.
inline void sgd_momentum_step(ModelParams& params, OptimizerState& state,
                              double eta) {
  const std::vector<ad::NodePtr> ps = params.all();
  if (ps.size() != state.velocity.size()) {
    throw ContractError("sgd_momentum_step: optimizer state does not match model");
  }
  for (std::size_t k = 0; k < ps.size(); ++k) {
    ad::Node& p = *ps[k];
    if (!p.grad.same_shape(p.value)) {
      throw ContractError(detail::msg("sgd_momentum_step: no gradient for ",
                                      ModelParams::param_name(k)));
    }
    if (!p.grad.all_finite()) {
      throw DomainError(detail::msg("sgd_momentum_step: non-finite gradient in ",
                                    ModelParams::param_name(k)));
    }
    Tensor& v = state.velocity[k];
    for (std::size_t i = 0; i < v.numel(); ++i) {
      v[i] = state.momentum * v[i] + p.grad[i] + state.weight_decay * p.value[i];
      p.value[i] -= eta * v[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Total objective
// ---------------------------------------------------------------------------

/// Weighted total objective: ce + lambda_r * rank + lambda_s * featcont.
/// Null or zero-weighted terms are skipped entirely so that ablations with a
/// zero weight reproduce the reduced objective bit-exactly.
inline ad::NodePtr total_loss(const ad::NodePtr& ce, const ad::NodePtr& rank,
                              const ad::NodePtr& featcont,
                              const Hyperparams& hp) {
  ad::NodePtr out = ce;
  if (rank && hp.lambda_r > 0.0) out = ad::add(out, ad::scale(rank, hp.lambda_r));
  if (featcont && hp.lambda_s > 0.0) {
    out = ad::add(out, ad::scale(featcont, hp.lambda_s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// Cycles through a shuffled index pool, reshuffling on wrap. Pools smaller
/// than the requested batch are sampled with replacement.
class IndexCycler {
 public:
  IndexCycler(std::vector<std::size_t> pool, std::uint64_t seed)
      : pool_(std::move(pool)), rng_(seed) {
    rng_.shuffle(pool_);
  }

  std::vector<std::size_t> next(std::size_t count) {
    if (pool_.empty()) throw ContractError("IndexCycler: empty pool");
    std::vector<std::size_t> out;
    out.reserve(count);
    if (pool_.size() < count) {
      for (std::size_t i = 0; i < count; ++i) {
        out.push_back(pool_[rng_.uniform_index(pool_.size())]);
      }
      return out;
    }
    while (out.size() < count) {
      if (pos_ == pool_.size()) {
        rng_.shuffle(pool_);
        pos_ = 0;
      }
      out.push_back(pool_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> pool_;
  Rng rng_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Per-step metrics. `total` always equals
/// (ce_x + lambda_u*ce_u) + lambda_r*rank + lambda_s*featcont.
struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double ce_x = 0.0;
  double ce_u = 0.0;
  double rank = 0.0;
  double featcont = 0.0;
  double total = 0.0;
  double mask_rate = 0.0;
  double pair_pos_rate = 0.0;
};

inline constexpr const char* kMetricsCsvHeader =
    "step,lr,ce_x,ce_u,rank,featcont,total,mask_rate,pair_pos_rate";

inline std::string step_record_csv(const StepRecord& r) {
  char buf[352];
  std::snprintf(buf, sizeof(buf),
                "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.step,
                r.lr, r.ce_x, r.ce_u, r.rank, r.featcont, r.total, r.mask_rate,
                r.pair_pos_rate);
  return std::string(buf);
}

/// Steps per epoch: the unlabeled stream dominates, so an epoch is one pass
/// over the unlabeled pool at mu*B per step (or over the labeled pool at B
/// per step when no unlabeled data exists).
inline std::size_t steps_per_epoch(const SslSplit& split, const Hyperparams& hp) {
  const bool supervised_only = split.unlabeled.empty();
  const std::size_t pool =
      supervised_only ? split.labeled.size() : split.unlabeled.size();
  const std::size_t per_step =
      supervised_only ? static_cast<std::size_t>(hp.batch_size)
                      : static_cast<std::size_t>(hp.batch_size) *
                            static_cast<std::size_t>(hp.mu);
  return std::max<std::size_t>(1, (pool + per_step - 1) / per_step);
}

/// Error rate of the argmax classifier on the given samples; ties break to the
/// lowest class index.
inline double evaluate(const ModelParams& params, const Dataset& ds,
                       const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ConfigError("evaluate: empty evaluation set");
  const std::size_t d = ds.sample_numel();
  Tensor x({indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      x.at(i, j) = ds.samples[indices[i] * d + j];
    }
  }
  const ForwardOutput out = forward(params, x);
  const Tensor& logits = out.logits->value;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    }
    if (static_cast<int>(best) != ds.labels[indices[i]]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(indices.size());
}

/// Runs the full objective: three forward views per step (weak labeled, weak
/// unlabeled, strong unlabeled), cross-entropy + ranking + semantic losses,
/// one backward pass, one SGD step. Loss families whose weight is zero are
/// skipped entirely; every stochastic subsystem draws from its own named
/// stream, so a skipped family never perturbs the remaining trajectory.
class Trainer {
 public:
  struct Options {
    Hyperparams hp;
    RankKind rank_kind = RankKind::kContrastive;
    OptimizerSettings opt;
    std::uint64_t seed = 0;
    std::size_t total_steps = 1;  // K in the cosine schedule
  };

  Trainer(const Dataset& ds, SslSplit split, ModelParams params, Augmenter aug,
          Options options)
      : ds_(ds),
        split_(std::move(split)),
        params_(std::move(params)),
        aug_(std::move(aug)),
        opt_(std::move(options)),
        state_(OptimizerState::init(params_, opt_.opt)),
        labeled_cycler_(split_.labeled,
                        derive_seed(opt_.seed, RngStream::kLabeledBatch)),
        unlabeled_cycler_(split_.unlabeled.empty()
                              ? nullptr
                              : std::make_unique<IndexCycler>(
                                    split_.unlabeled,
                                    derive_seed(opt_.seed,
                                                RngStream::kUnlabeledBatch))) {
    opt_.hp.validate();
    if (split_.labeled.empty()) throw ConfigError("Trainer: no labeled data");
  }

  std::size_t steps_per_epoch() const {
    return rrm::steps_per_epoch(split_, opt_.hp);
  }

  StepRecord step() {
    const std::size_t k = steps_done_;
    const Hyperparams& hp = opt_.hp;
    const std::size_t bsz = static_cast<std::size_t>(hp.batch_size);
    const std::size_t ubsz = bsz * static_cast<std::size_t>(hp.mu);

    // Labeled weak view.
    const std::vector<std::size_t> lidx = labeled_cycler_.next(bsz);
    Rng rng_ax(derive_seed(opt_.seed, RngStream::kAugLabeled, k));
    Tensor xw = augmented_batch(lidx, rng_ax, /*strong=*/false);
    std::vector<int> ly(lidx.size());
    for (std::size_t i = 0; i < lidx.size(); ++i) ly[i] = ds_.labels[lidx[i]];

    const bool unlabeled_on =
        unlabeled_cycler_ &&
        (hp.lambda_u > 0.0 || hp.lambda_r > 0.0 || hp.lambda_s > 0.0);

    ForwardOutput out_x = forward(params_, xw);
    ad::NodePtr l_x = supervised_ce(out_x.logits, one_hot(ly, params_.class_count()));

    StepRecord rec;
    rec.step = k;
    rec.ce_x = l_x->value.item();

    ForwardOutput out_uw, out_us;
    PseudoLabelResult pl;
    if (unlabeled_on) {
      const std::vector<std::size_t> uidx = unlabeled_cycler_->next(ubsz);
      Rng rng_uw(derive_seed(opt_.seed, RngStream::kAugUnlabeledWeak, k));
      Rng rng_us(derive_seed(opt_.seed, RngStream::kAugUnlabeledStrong, k));
      Tensor uw = augmented_batch(uidx, rng_uw, /*strong=*/false);
      Tensor us = augmented_batch(uidx, rng_us, /*strong=*/true);
      out_uw = forward(params_, uw);
      out_us = forward(params_, us);
      pl = pseudo_labels(out_uw.logits->value, hp.tau);
      rec.mask_rate = pl.mask_rate();
    }

    ad::NodePtr ce = l_x;
    if (unlabeled_on && hp.lambda_u > 0.0) {
      ad::NodePtr l_u = unlabeled_ce(out_us.logits, pl);
      rec.ce_u = l_u->value.item();
      ce = combined_ce(l_x, l_u, hp.lambda_u);
    }

    ad::NodePtr rank_node;
    if (hp.lambda_r > 0.0) {
      NormalizedLogitsBatch labeled_batch = normalized_logits(out_x.logits, ly);
      NormalizedLogitsBatch unlabeled_batch{
          ad::constant(Tensor({0, params_.class_count()})), {}};
      if (unlabeled_on) {
        const std::vector<std::size_t> pass = pl.passing_indices();
        unlabeled_batch = normalized_logits(
            ad::gather_rows(out_us.logits, pass), pl.passing_labels());
      }
      ScalarLoss rank =
          ranking_loss(opt_.rank_kind, labeled_batch, unlabeled_batch, hp);
      rank_node = rank.value;
      rec.rank = rank_node->value.item();
    }

    ad::NodePtr featcont_node;
    if (unlabeled_on && hp.lambda_s > 0.0) {
      Rng rng_refs(derive_seed(opt_.seed, RngStream::kReferences, k));
      SemanticLossResult sem =
          semantic_loss(out_x.representation->value, ly, out_uw.representation,
                        out_us.representation, hp, rng_refs);
      featcont_node = sem.loss.value;
      rec.featcont = featcont_node->value.item();
      rec.pair_pos_rate = sem.pair_positive_rate;
      last_reference_count_ = sem.reference_count;
    }

    ad::NodePtr total = total_loss(ce, rank_node, featcont_node, hp);
    rec.total = total->value.item();

    ad::backward(total);
    rec.lr = cosine_lr(k, opt_.total_steps, opt_.opt.eta0);
    sgd_momentum_step(params_, state_, rec.lr);

    ++steps_done_;
    return rec;
  }

  const ModelParams& params() const { return params_; }
  const SslSplit& split() const { return split_; }
  std::size_t steps_done() const { return steps_done_; }
  std::size_t last_reference_count() const { return last_reference_count_; }

  double test_error() const { return evaluate(params_, ds_, split_.test); }
  double validation_error() const {
    return evaluate(params_, ds_, split_.validation);
  }

 private:
  Tensor augmented_batch(const std::vector<std::size_t>& idx, Rng& rng,
                         bool strong) const {
    const std::size_t d = ds_.sample_numel();
    Tensor out({idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Tensor s = ds_.sample(idx[i]);
      Tensor a = strong ? aug_.strong(s, rng) : aug_.weak(s, rng);
      for (std::size_t j = 0; j < d; ++j) out.at(i, j) = a[j];
    }
    return out;
  }

  const Dataset& ds_;
  SslSplit split_;
  ModelParams params_;
  Augmenter aug_;
  Options opt_;
  OptimizerState state_;
  IndexCycler labeled_cycler_;
  std::unique_ptr<IndexCycler> unlabeled_cycler_;
  std::size_t steps_done_ = 0;
  std::size_t last_reference_count_ = 0;
};

}  // namespace rrm

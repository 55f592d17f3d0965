#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rrm/autodiff.hpp"
#include "rrm/hyperparams.hpp"
#include "rrm/losses_common.hpp"

namespace rrm {

// ---------------------------------------------------------------------------
// Cross-Entropy losses
// ---------------------------------------------------------------------------

/// Mean cross-entropy between one-hot targets and softmaxed logits.
inline ad::NodePtr supervised_ce(const ad::NodePtr& logits,
                                 const Tensor& labels_onehot) {
  ad::detail::require_rank2(logits->value, "supervised_ce");
  if (!logits->value.same_shape(labels_onehot)) {
    throw ShapeError(detail::msg("supervised_ce: logits ",
                                 shape_str(logits->value), " vs labels ",
                                 shape_str(labels_onehot)));
  }
  const std::size_t n = labels_onehot.rows(), c = labels_onehot.cols();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = labels_onehot.at(i, j);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw ContractError(detail::msg("supervised_ce: label row ", i,
                                        " is not one-hot (entry ", v, ")"));
      }
    }
    if (ones != 1) {
      throw ContractError(detail::msg("supervised_ce: label row ", i, " has ",
                                      ones, " ones"));
    }
  }
  ad::NodePtr picked = ad::mul(ad::log_softmax(logits), ad::constant(labels_onehot));
  return ad::scale(ad::sum(picked), -1.0 / static_cast<double>(n));
}

/// Per-sample hard pseudo-labels from weakly-augmented logits. Values only:
/// no gradient ever flows through a pseudo-label. Argmax ties break to the
/// lowest class index.
struct PseudoLabelResult {
  Tensor q_tilde;           // [n x C] softmaxed weak logits
  std::vector<int> q_hat;   // argmax class per row
  std::vector<bool> mask;   // max probability >= tau

  std::size_t size() const { return q_hat.size(); }

  std::size_t passing() const {
    std::size_t k = 0;
    for (bool m : mask) k += m ? 1 : 0;
    return k;
  }

  std::vector<std::size_t> passing_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) idx.push_back(i);
    }
    return idx;
  }

  std::vector<int> passing_labels() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) out.push_back(q_hat[i]);
    }
    return out;
  }

  double mask_rate() const {
    return mask.empty() ? 0.0
                        : static_cast<double>(passing()) /
                              static_cast<double>(mask.size());
  }
};

inline PseudoLabelResult pseudo_labels(const Tensor& logits_uw, double tau) {
  PseudoLabelResult res;
  res.q_tilde = ad::detail::softmax_rows_value(logits_uw);
  const std::size_t n = res.q_tilde.rows(), c = res.q_tilde.cols();
  res.q_hat.resize(n);
  res.mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (res.q_tilde.at(i, j) > res.q_tilde.at(i, best)) best = j;
    }
    res.q_hat[i] = static_cast<int>(best);
    res.mask[i] = res.q_tilde.at(i, best) >= tau;
  }
  return res;
}

/// Confidence-masked cross-entropy of strong-view logits against pseudo
/// labels, averaged over the full unlabeled batch size (masked-out rows
/// contribute zero but still count in the divisor).
inline ad::NodePtr unlabeled_ce(const ad::NodePtr& logits_us,
                                const PseudoLabelResult& pl) {
  ad::detail::require_rank2(logits_us->value, "unlabeled_ce");
  const std::size_t n = logits_us->value.rows(), c = logits_us->value.cols();
  if (n != pl.size() || c != pl.q_tilde.cols()) {
    throw ShapeError(detail::msg("unlabeled_ce: strong logits ",
                                 shape_str(logits_us->value),
                                 " incompatible with ", pl.size(),
                                 " pseudo-labels over ", pl.q_tilde.cols(),
                                 " classes"));
  }
  Tensor weights({n, c});  // one-hot target zeroed on masked-out rows
  for (std::size_t i = 0; i < n; ++i) {
    if (pl.mask[i]) weights.at(i, static_cast<std::size_t>(pl.q_hat[i])) = 1.0;
  }
  ad::NodePtr picked = ad::mul(ad::log_softmax(logits_us), ad::constant(weights));
  return ad::scale(ad::sum(picked), -1.0 / static_cast<double>(n));
}

/// Combined cross-entropy: labeled term plus weighted unlabeled term.
inline ad::NodePtr combined_ce(const ad::NodePtr& l_x, const ad::NodePtr& l_u,
                               double lambda_u) {
  return ad::add(l_x, ad::scale(l_u, lambda_u));
}

// ---------------------------------------------------------------------------
// Ranking losses over L2-normalized logits
// ---------------------------------------------------------------------------

/// A batch of unit-norm logits vectors with their (true or pseudo) labels.
struct NormalizedLogitsBatch {
  ad::NodePtr vectors;      // [n x C], unit rows
  std::vector<int> labels;  // one per row

  std::size_t size() const { return labels.size(); }
};

/// L2-normalizes raw logits and bundles them with labels.
inline NormalizedLogitsBatch normalized_logits(const ad::NodePtr& logits,
                                               std::vector<int> labels) {
  if (logits->value.rows() != labels.size()) {
    throw ShapeError(detail::msg("normalized_logits: ", logits->value.rows(),
                                 " rows vs ", labels.size(), " labels"));
  }
  return {ad::l2_normalize(logits), std::move(labels)};
}

namespace detail {

inline void require_unit_rows(const Tensor& v, const char* op) {
  for (std::size_t i = 0; i < v.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < v.cols(); ++j) s += v.at(i, j) * v.at(i, j);
    if (std::abs(std::sqrt(s) - 1.0) > 1e-9) {
      throw ContractError(msg(op, ": row ", i, " is not unit-norm (", std::sqrt(s), ")"));
    }
  }
}

// Same-label indicator [n x n] including the diagonal.
inline Tensor same_label_mask(const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m.at(i, j) = labels[i] == labels[j] ? 1.0 : 0.0;
  return m;
}

}  // namespace detail

/// BatchMean Triplet loss: per anchor, softplus(margin + mean positive
/// distance - mean negative distance), where both inner means divide by the
/// full batch size and the positive set includes the anchor itself. Result is
/// the mean over anchors. Empty batch returns zero with the degenerate flag.
inline ScalarLoss batchmean_triplet(const NormalizedLogitsBatch& batch,
                                    double margin) {
  const std::size_t n = batch.size();
  if (n == 0) return zero_loss();
  detail::require_unit_rows(batch.vectors->value, "batchmean_triplet");

  const Tensor pos = detail::same_label_mask(batch.labels);
  Tensor neg({n, n});
  for (std::size_t i = 0; i < n * n; ++i) neg[i] = 1.0 - pos[i];

  ad::NodePtr d = pairwise_distances(batch.vectors);
  const double inv_n = 1.0 / static_cast<double>(n);
  ad::NodePtr mean_pos = ad::scale(ad::row_sums(ad::mul(d, ad::constant(pos))), inv_n);
  ad::NodePtr mean_neg = ad::scale(ad::row_sums(ad::mul(d, ad::constant(neg))), inv_n);
  ad::NodePtr arg = ad::add_scalar(ad::sub(mean_pos, mean_neg), margin);
  return {ad::scale(ad::sum(ad::softplus(arg)), inv_n), false};
}

/// Contrastive ranking loss: mean over ordered same-label pairs (a, p), a != p,
/// of -ln[ exp(sim_ap/T) / (exp(sim_ap/T) + sum over negatives of
/// exp(sim_an/T)) ], log-sum-exp stable. Pairs whose anchor has no negatives
/// contribute zero. Returns zero with the degenerate flag when no valid pair
/// exists.
inline ScalarLoss contrastive_rank(const NormalizedLogitsBatch& batch,
                                   double temperature) {
  if (temperature <= 0.0) {
    throw ConfigError(detail::msg("contrastive_rank: temperature must be > 0, got ",
                                  temperature));
  }
  const std::size_t n = batch.size();
  if (n == 0) return zero_loss();
  detail::require_unit_rows(batch.vectors->value, "contrastive_rank");

  const Tensor same = detail::same_label_mask(batch.labels);
  Tensor pair_mask({n, n});
  Tensor neg_mask({n, n});
  std::size_t pair_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && same.at(i, j) == 1.0) {
        pair_mask.at(i, j) = 1.0;
        ++pair_count;
      }
      neg_mask.at(i, j) = 1.0 - same.at(i, j);
    }
  }
  if (pair_count == 0) return zero_loss();

  ad::NodePtr scaled =
      ad::scale(ad::matmul(batch.vectors, ad::transpose(batch.vectors)),
                1.0 / temperature);
  // Constant per-row shift keeps every exponential in range.
  Tensor neg_row_max({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = scaled->value.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, scaled->value.at(i, j));
    neg_row_max.at(i, 0) = -mx;
  }
  ad::NodePtr shifted = ad::add_colvec(scaled, ad::constant(neg_row_max));
  ad::NodePtr expd = ad::exp(shifted);
  ad::NodePtr z_neg = ad::row_sums(ad::mul(expd, ad::constant(neg_mask)));
  ad::NodePtr denom = ad::add_colvec(expd, z_neg);
  ad::NodePtr terms = ad::sub(ad::log(denom), shifted);
  ad::NodePtr total = ad::sum(ad::mul(terms, ad::constant(pair_mask)));
  return {ad::scale(total, 1.0 / static_cast<double>(pair_count)), false};
}

enum class RankKind { kBatchMeanTriplet, kContrastive };

/// Ranking loss over both batches: labeled term plus unlabeled term of the
/// selected kind. The unlabeled batch must already be restricted to
/// confidence-passing rows carrying pseudo-labels.
inline ScalarLoss ranking_loss(RankKind kind,
                               const NormalizedLogitsBatch& labeled,
                               const NormalizedLogitsBatch& unlabeled,
                               const Hyperparams& hp) {
  ScalarLoss lx, lu;
  switch (kind) {
    case RankKind::kBatchMeanTriplet:
      lx = batchmean_triplet(labeled, hp.margin);
      lu = batchmean_triplet(unlabeled, hp.margin);
      break;
    case RankKind::kContrastive:
      lx = contrastive_rank(labeled, hp.temperature);
      lu = contrastive_rank(unlabeled, hp.temperature);
      break;
    default:
      throw ConfigError("ranking_loss: unknown ranking kind");
  }
  return {ad::add(lx.value, lu.value), lx.degenerate || lu.degenerate};
}

}  // namespace rrm

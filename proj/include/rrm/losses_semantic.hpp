#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "rrm/autodiff.hpp"
#include "rrm/hyperparams.hpp"
#include "rrm/losses_common.hpp"
#include "rrm/rng.hpp"

namespace rrm {

/// One reference image representation per class present in the labeled batch.
/// References are sampled fresh every step and detached: gradients do not
/// flow back into them.
struct ReferenceSet {
  Tensor reps;                 // [K x d_f]
  std::vector<int> class_ids;  // ascending, one per row
};

/// Class-wise cosine similarities between unlabeled representations and the
/// reference representations; column order follows ReferenceSet.class_ids.
struct SimilarityRep {
  ad::NodePtr scores;  // [mu*B x K], entries in [-1, 1]
};

/// Symmetric boolean pseudo pair-label matrix with a true diagonal.
struct PairLabelMatrix {
  std::vector<std::vector<bool>> t;

  std::size_t size() const { return t.size(); }

  /// Fraction of unordered off-diagonal pairs labeled t=1.
  double positive_rate() const {
    const std::size_t n = size();
    if (n < 2) return 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pos += t[i][j] ? 1 : 0;
    return static_cast<double>(pos) /
           static_cast<double>(n * (n - 1) / 2);
  }
};

/// Uniformly picks one representation per class appearing in the labeled
/// batch. Output rows are ordered by ascending class id.
inline ReferenceSet sample_references(const Tensor& reps_x,
                                      const std::vector<int>& labels, Rng& rng) {
  if (reps_x.rank() != 2 || reps_x.rows() != labels.size()) {
    throw ShapeError(detail::msg("sample_references: reps ", shape_str(reps_x),
                                 " vs ", labels.size(), " labels"));
  }
  if (labels.empty()) throw ContractError("sample_references: empty labeled batch");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  ReferenceSet refs;
  const std::size_t d = reps_x.cols();
  refs.reps = Tensor({by_class.size(), d});
  std::size_t k = 0;
  for (const auto& [cls, rows] : by_class) {
    refs.class_ids.push_back(cls);
    const std::size_t pick = rows[rng.uniform_index(rows.size())];
    for (std::size_t j = 0; j < d; ++j) refs.reps.at(k, j) = reps_x.at(pick, j);
    ++k;
  }
  return refs;
}

/// Cosine similarity of every unlabeled representation against every
/// reference. Differentiable with respect to both inputs; the semantic loss
/// passes references in as constants.
inline SimilarityRep similarity_representation(const ad::NodePtr& reps_u,
                                               const ad::NodePtr& refs) {
  if (reps_u->value.rank() != 2 || refs->value.rank() != 2 ||
      reps_u->value.cols() != refs->value.cols()) {
    throw ShapeError(detail::msg("similarity_representation: ",
                                 shape_str(reps_u->value), " vs ",
                                 shape_str(refs->value)));
  }
  ad::NodePtr u = ad::l2_normalize(reps_u);
  ad::NodePtr r = ad::l2_normalize(refs);
  return {ad::matmul(u, ad::transpose(r))};
}

/// Thresholds pairwise Euclidean distances between similarity representations
/// into same-class (t=1) / different-class (t=0) pseudo pair labels. Operates
/// on values only; no gradient flows through the comparison.
inline PairLabelMatrix assign_pair_labels(const Tensor& scores, double psi) {
  if (psi <= 0.0) {
    throw ConfigError(detail::msg("assign_pair_labels: psi must be > 0, got ", psi));
  }
  if (scores.rank() != 2) {
    throw ShapeError("assign_pair_labels: scores must be rank-2");
  }
  const std::size_t n = scores.rows(), k = scores.cols();
  PairLabelMatrix m;
  m.t.assign(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    m.t[i][i] = true;
    for (std::size_t j = i + 1; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double dv = scores.at(i, c) - scores.at(j, c);
        d2 += dv * dv;
      }
      const bool same = std::sqrt(d2) < psi;
      m.t[i][j] = same;
      m.t[j][i] = same;
    }
  }
  return m;
}

/// Single-pair feature contrastive term: distance for t=1 pairs, hinge
/// max(0, phi - distance) for t=0 pairs.
inline ad::NodePtr feature_contrastive_pair(const ad::NodePtr& f_i,
                                            const ad::NodePtr& f_j, bool t,
                                            double phi) {
  if (phi <= 0.0) {
    throw ConfigError(detail::msg("feature_contrastive_pair: phi must be > 0, got ",
                                  phi));
  }
  ad::NodePtr diff = ad::sub(f_i, f_j);
  ad::NodePtr dist = ad::safe_sqrt(ad::sum(ad::mul(diff, diff)));
  if (t) return dist;
  return ad::relu(ad::add_scalar(ad::neg(dist), phi));
}

/// Mean feature contrastive term over all unordered pairs of one stream.
inline ad::NodePtr feature_contrastive_stream(const ad::NodePtr& reps,
                                              const PairLabelMatrix& t,
                                              double phi) {
  const std::size_t n = reps->value.rows();
  Tensor negu({n, n});  // negative pairs, upper triangle only
  Tensor posu({n, n});  // positive pairs, upper triangle only
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      (t.t[i][j] ? posu : negu).at(i, j) = 1.0;
    }
  }
  const double inv_pairs = 2.0 / static_cast<double>(n * (n - 1));
  ad::NodePtr d = pairwise_distances(reps);
  ad::NodePtr pull = ad::sum(ad::mul(d, ad::constant(posu)));
  ad::NodePtr hinge = ad::relu(ad::add_scalar(ad::neg(d), phi));
  ad::NodePtr push = ad::sum(ad::mul(hinge, ad::constant(negu)));
  return ad::scale(ad::add(pull, push), inv_pairs);
}

/// Sum of the per-stream feature contrastive losses (weak and strong), each a
/// mean over all unordered pairs with that stream's pair labels.
inline ScalarLoss feature_contrastive_batch(const ad::NodePtr& reps_uw,
                                            const ad::NodePtr& reps_us,
                                            const PairLabelMatrix& t_w,
                                            const PairLabelMatrix& t_s,
                                            double phi) {
  if (phi <= 0.0) {
    throw ConfigError(detail::msg("feature_contrastive_batch: phi must be > 0, got ",
                                  phi));
  }
  if (!reps_uw->value.same_shape(reps_us->value)) {
    throw ShapeError(detail::msg("feature_contrastive_batch: weak ",
                                 shape_str(reps_uw->value), " vs strong ",
                                 shape_str(reps_us->value)));
  }
  const std::size_t n = reps_uw->value.rows();
  if (n != t_w.size() || n != t_s.size()) {
    throw ShapeError(detail::msg("feature_contrastive_batch: ", n,
                                 " rows vs pair matrices of ", t_w.size(),
                                 " and ", t_s.size()));
  }
  if (n < 2) return zero_loss();
  ad::NodePtr lw = feature_contrastive_stream(reps_uw, t_w, phi);
  ad::NodePtr ls = feature_contrastive_stream(reps_us, t_s, phi);
  return {ad::add(lw, ls), false};
}

/// Diagnostics surfaced alongside the semantic loss value.
struct SemanticLossResult {
  ScalarLoss loss;
  std::size_t reference_count = 0;
  double pair_positive_rate = 0.0;  // mean over the two streams
};

/// The full semantics-oriented pipeline: sample per-class references from the
/// labeled batch, build cosine similarity representations for both unlabeled
/// streams, threshold them into pair labels per stream, then apply the
/// feature contrastive loss to the raw representations.
inline SemanticLossResult semantic_loss(const Tensor& reps_x,
                                        const std::vector<int>& labels_x,
                                        const ad::NodePtr& reps_uw,
                                        const ad::NodePtr& reps_us,
                                        const Hyperparams& hp, Rng& rng) {
  ReferenceSet refs = sample_references(reps_x, labels_x, rng);
  ad::NodePtr refs_node = ad::constant(refs.reps);
  SimilarityRep s_w = similarity_representation(reps_uw, refs_node);
  SimilarityRep s_s = similarity_representation(reps_us, refs_node);
  PairLabelMatrix t_w = assign_pair_labels(s_w.scores->value, hp.psi);
  PairLabelMatrix t_s = assign_pair_labels(s_s.scores->value, hp.psi);

  SemanticLossResult out;
  out.loss = feature_contrastive_batch(reps_uw, reps_us, t_w, t_s, hp.phi);
  out.reference_count = refs.class_ids.size();
  out.pair_positive_rate = 0.5 * (t_w.positive_rate() + t_s.positive_rate());
  return out;
}

}  // namespace rrm

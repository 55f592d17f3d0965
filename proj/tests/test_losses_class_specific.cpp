#include "rrm/losses_class_specific.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rrm/gradcheck.hpp"
#include "rrm/rng.hpp"

namespace rrm {
namespace {

using ad::NodePtr;

// ---------------------------------------------------------------------------
// Straight-line oracles: plain scalar loops, independent of the tensor ops.
// ---------------------------------------------------------------------------

double dist_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double dot_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> softmax_oracle(const std::vector<double>& logits) {
  double z = 0.0;
  std::vector<double> out(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) z += std::exp(logits[j]);
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = std::exp(logits[j]) / z;
  return out;
}

double ce_oracle(const std::vector<std::vector<double>>& logits,
                 const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    total += -std::log(softmax_oracle(logits[i])[labels[i]]);
  }
  return total / static_cast<double>(logits.size());
}

// BatchMean Triplet reference: both inner sums divided by the batch size, the
// anchor counts as its own positive (d=0), softplus envelope, mean over
// anchors.
double bm_oracle(const std::vector<std::vector<double>>& rows,
                 const std::vector<int>& labels, double margin) {
  const std::size_t n = rows.size();
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    double sp = 0.0, sn = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (labels[p] == labels[a]) sp += dist_oracle(rows[a], rows[p]);
    }
    for (std::size_t q = 0; q < n; ++q) {
      if (labels[q] != labels[a]) sn += dist_oracle(rows[a], rows[q]);
    }
    const double arg = margin + sp / n - sn / n;
    total += std::log(1.0 + std::exp(arg));
  }
  return total / static_cast<double>(n);
}

// Contrastive over ordered same-label pairs, naive exponentials.
double ct_oracle(const std::vector<std::vector<double>>& rows,
                 const std::vector<int>& labels, double temperature) {
  const std::size_t n = rows.size();
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (a == p || labels[a] != labels[p]) continue;
      const double num = std::exp(dot_oracle(rows[a], rows[p]) / temperature);
      double den = num;
      for (std::size_t q = 0; q < n; ++q) {
        if (labels[q] != labels[a]) {
          den += std::exp(dot_oracle(rows[a], rows[q]) / temperature);
        }
      }
      total += -std::log(num / den);
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Helpers for building random batches
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> random_unit_rows(std::size_t n, std::size_t c,
                                                  Rng& rng) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(c));
  for (auto& r : rows) {
    double norm = 0.0;
    for (double& v : r) {
      v = rng.uniform(-1.0, 1.0);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : r) v /= norm;
  }
  return rows;
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows) {
  Tensor t({rows.size(), rows[0].size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) t.at(i, j) = rows[i][j];
  return t;
}

NormalizedLogitsBatch make_batch(const std::vector<std::vector<double>>& rows,
                                 std::vector<int> labels) {
  return {ad::constant(rows_to_tensor(rows)), std::move(labels)};
}

// ---------------------------------------------------------------------------
// supervised_ce
// ---------------------------------------------------------------------------

TEST(SupervisedCe, UniformSoftmaxGivesLogC) {
  auto logits = ad::constant(Tensor({3, 10}));
  const Tensor onehot = one_hot({1, 5, 9}, 10);
  EXPECT_NEAR(supervised_ce(logits, onehot)->value.item(), std::log(10.0), 1e-9);
}

TEST(SupervisedCe, ConfidentCorrectIsNearZero) {
  Tensor t({2, 4});
  t.at(0, 2) = 1000.0;
  t.at(1, 0) = 1000.0;
  const double v =
      supervised_ce(ad::constant(t), one_hot({2, 0}, 4))->value.item();
  EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(SupervisedCe, MatchesScalarOracle) {
  Rng rng(5);
  std::vector<std::vector<double>> logits = {{0.3, -1.2, 2.0}, {1.5, 0.1, -0.4}};
  std::vector<int> labels = {2, 0};
  const double got =
      supervised_ce(ad::constant(rows_to_tensor(logits)), one_hot(labels, 3))
          ->value.item();
  EXPECT_NEAR(got, ce_oracle(logits, labels), 1e-12);
  (void)rng;
}

TEST(SupervisedCe, RejectsNonOneHot) {
  auto logits = ad::constant(Tensor({1, 3}));
  EXPECT_THROW(supervised_ce(logits, Tensor({1, 3}, {0.5, 0.5, 0.0})),
               ContractError);
  EXPECT_THROW(supervised_ce(logits, Tensor({1, 3}, {1.0, 1.0, 0.0})),
               ContractError);
  EXPECT_THROW(supervised_ce(logits, Tensor({1, 3}, {0.0, 0.0, 0.0})),
               ContractError);
}

TEST(SupervisedCe, GradientPassesCheck) {
  Rng rng(6);
  const Tensor onehot = one_hot({0, 2, 1, 2}, 3);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor x({4, 3});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-2, 2);
    const double err = ad::check_gradient(
        [&](const NodePtr& in) { return supervised_ce(in, onehot); }, x, 1e-5);
    EXPECT_LT(err, 1e-4);
  }
}

// ---------------------------------------------------------------------------
// pseudo_labels / unlabeled_ce
// ---------------------------------------------------------------------------

TEST(PseudoLabels, ConfidentRowPasses) {
  const PseudoLabelResult pl =
      pseudo_labels(Tensor({1, 3}, {10.0, 0.0, 0.0}), 0.95);
  EXPECT_EQ(pl.q_hat[0], 0);
  EXPECT_TRUE(pl.mask[0]);
  EXPECT_NEAR(pl.q_tilde.at(0, 0), 1.0, 1e-4);
}

TEST(PseudoLabels, UniformRowIsMaskedOut) {
  const PseudoLabelResult pl = pseudo_labels(Tensor({1, 10}), 0.95);
  EXPECT_FALSE(pl.mask[0]);
  EXPECT_EQ(pl.q_hat[0], 0);  // tie-break to lowest index
}

TEST(PseudoLabels, BelowThresholdContributesZero) {
  // softmax([ln 9, 0]) = [0.9, 0.1]: max 0.9 < tau
  Tensor weak({1, 2}, {std::log(9.0), 0.0});
  const PseudoLabelResult pl = pseudo_labels(weak, 0.95);
  EXPECT_FALSE(pl.mask[0]);
  auto strong = ad::constant(Tensor({1, 2}, {3.0, -1.0}));
  EXPECT_DOUBLE_EQ(unlabeled_ce(strong, pl)->value.item(), 0.0);
}

TEST(PseudoLabels, ArgmaxInvariantUnderSoftmax) {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor logits({4, 6});
    for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] = rng.uniform(-3, 3);
    const PseudoLabelResult raw = pseudo_labels(logits, 0.95);
    const PseudoLabelResult soft =
        pseudo_labels(ad::detail::softmax_rows_value(logits), 0.95);
    EXPECT_EQ(raw.q_hat, soft.q_hat);
  }
}

TEST(UnlabeledCe, AllMaskedOutGivesZero) {
  const PseudoLabelResult pl = pseudo_labels(Tensor({3, 4}), 0.95);
  EXPECT_EQ(pl.passing(), 0u);
  auto strong = ad::constant(Tensor({3, 4}, std::vector<double>(12, 1.0)));
  EXPECT_DOUBLE_EQ(unlabeled_ce(strong, pl)->value.item(), 0.0);
}

TEST(UnlabeledCe, ConfidentConsistentIsNearZero) {
  Tensor weak({2, 3});
  weak.at(0, 1) = 1000.0;
  weak.at(1, 2) = 1000.0;
  const PseudoLabelResult pl = pseudo_labels(weak, 0.95);
  EXPECT_EQ(pl.passing(), 2u);
  EXPECT_NEAR(unlabeled_ce(ad::constant(weak), pl)->value.item(), 0.0, 1e-9);
}

TEST(UnlabeledCe, MixedMaskMatchesPerRowOracle) {
  // Rows 0 and 2 confident, rows 1 and 3 not.
  Tensor weak({4, 3});
  weak.at(0, 1) = 8.0;
  weak.at(2, 0) = 9.0;
  const PseudoLabelResult pl = pseudo_labels(weak, 0.95);
  ASSERT_TRUE(pl.mask[0]);
  ASSERT_FALSE(pl.mask[1]);
  ASSERT_TRUE(pl.mask[2]);
  ASSERT_FALSE(pl.mask[3]);

  std::vector<std::vector<double>> strong = {
      {0.5, 1.0, -0.7}, {2.0, 0.0, 0.0}, {1.1, -0.3, 0.8}, {0.0, 0.0, 4.0}};
  double expected = 0.0;
  expected += -std::log(softmax_oracle(strong[0])[pl.q_hat[0]]);
  expected += -std::log(softmax_oracle(strong[2])[pl.q_hat[2]]);
  expected /= 4.0;  // divisor is the full batch size
  const double got =
      unlabeled_ce(ad::constant(rows_to_tensor(strong)), pl)->value.item();
  EXPECT_NEAR(got, expected, 1e-12);
}

TEST(UnlabeledCe, GradientPassesCheck) {
  Rng rng(8);
  Tensor weak({3, 4});
  weak.at(0, 1) = 10.0;
  weak.at(1, 3) = 10.0;  // row 2 stays uniform and masked out
  const PseudoLabelResult pl = pseudo_labels(weak, 0.95);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor x({3, 4});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-2, 2);
    const double err = ad::check_gradient(
        [&](const NodePtr& in) { return unlabeled_ce(in, pl); }, x, 1e-5);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(CombinedCe, Arithmetic) {
  auto l_x = ad::constant(Tensor::scalar(1.0));
  auto l_u = ad::constant(Tensor::scalar(0.5));
  EXPECT_DOUBLE_EQ(combined_ce(l_x, l_u, 1.0)->value.item(), 1.5);
  EXPECT_DOUBLE_EQ(combined_ce(l_x, l_u, 0.0)->value.item(), 1.0);
  auto a = ad::constant(Tensor::scalar(2.3));
  auto b = ad::constant(Tensor::scalar(0.4));
  EXPECT_NEAR(combined_ce(a, b, 2.0)->value.item(), 3.1, 1e-12);
}

// ---------------------------------------------------------------------------
// BatchMean Triplet
// ---------------------------------------------------------------------------

TEST(BatchMeanTriplet, TwoIdenticalSameLabelRows) {
  const std::vector<std::vector<double>> rows = {{1, 0, 0}, {1, 0, 0}};
  const ScalarLoss loss = batchmean_triplet(make_batch(rows, {2, 2}), 0.5);
  EXPECT_FALSE(loss.degenerate);
  EXPECT_NEAR(loss.value->value.item(), std::log1p(std::exp(0.5)), 1e-12);
  EXPECT_NEAR(loss.value->value.item(), 0.974077, 1e-6);
}

TEST(BatchMeanTriplet, SingletonBatchGivesSoftplusMargin) {
  const std::vector<std::vector<double>> rows = {{0, 1}};
  const ScalarLoss loss = batchmean_triplet(make_batch(rows, {0}), 0.5);
  EXPECT_NEAR(loss.value->value.item(), std::log1p(std::exp(0.5)), 1e-12);
}

TEST(BatchMeanTriplet, EmptyBatchIsDegenerateZero) {
  NormalizedLogitsBatch empty{ad::constant(Tensor({0, 3})), {}};
  const ScalarLoss loss = batchmean_triplet(empty, 0.5);
  EXPECT_TRUE(loss.degenerate);
  EXPECT_DOUBLE_EQ(loss.value->value.item(), 0.0);
}

TEST(BatchMeanTriplet, MatchesBruteForceOnSixRows) {
  Rng rng(9);
  const auto rows = random_unit_rows(6, 4, rng);
  const std::vector<int> labels = {0, 1, 0, 1, 0, 1};
  const double got =
      batchmean_triplet(make_batch(rows, labels), 0.5).value->value.item();
  const double want = bm_oracle(rows, labels, 0.5);
  EXPECT_NEAR(got, want, 1e-10 * std::abs(want));
}

TEST(BatchMeanTriplet, OracleEquivalenceOverRandomInstances) {
  Rng rng(10);
  for (int seed_rep = 0; seed_rep < 100; ++seed_rep) {
    const std::size_t n = 2 + rng.uniform_index(7);  // 2..8
    const std::size_t c = 2 + rng.uniform_index(4);
    const auto rows = random_unit_rows(n, c, rng);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_index(3));
    const double got =
        batchmean_triplet(make_batch(rows, labels), 0.5).value->value.item();
    const double want = bm_oracle(rows, labels, 0.5);
    ASSERT_NEAR(got, want, 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST(BatchMeanTriplet, StrictlyPositive) {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto rows = random_unit_rows(5, 3, rng);
    std::vector<int> labels(5);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_index(2));
    EXPECT_GT(batchmean_triplet(make_batch(rows, labels), 0.5).value->value.item(),
              0.0);
  }
}

TEST(BatchMeanTriplet, PermutationInvariant) {
  Rng rng(12);
  const auto rows = random_unit_rows(6, 3, rng);
  const std::vector<int> labels = {0, 1, 2, 0, 1, 2};
  const double base =
      batchmean_triplet(make_batch(rows, labels), 0.5).value->value.item();
  std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  std::vector<std::vector<double>> prows;
  std::vector<int> plabels;
  for (std::size_t i : perm) {
    prows.push_back(rows[i]);
    plabels.push_back(labels[i]);
  }
  const double permuted =
      batchmean_triplet(make_batch(prows, plabels), 0.5).value->value.item();
  EXPECT_NEAR(base, permuted, 1e-12);
}

TEST(BatchMeanTriplet, ScaleInvarianceThroughNormalization) {
  Rng rng(13);
  Tensor raw({5, 4});
  for (std::size_t i = 0; i < raw.numel(); ++i) raw[i] = rng.uniform(-2, 2);
  const std::vector<int> labels = {0, 1, 0, 1, 1};
  const double base =
      batchmean_triplet(normalized_logits(ad::constant(raw), labels), 0.5)
          .value->value.item();
  for (double c : {0.1, 2.0, 100.0}) {
    Tensor scaled = raw;
    for (std::size_t i = 0; i < raw.numel(); ++i) scaled[i] *= c;
    const double got =
        batchmean_triplet(normalized_logits(ad::constant(scaled), labels), 0.5)
            .value->value.item();
    EXPECT_NEAR(got, base, 1e-9);
    // Cross-entropy has no such invariance.
    const double ce_base =
        supervised_ce(ad::constant(raw), one_hot(labels, 4))->value.item();
    const double ce_scaled =
        supervised_ce(ad::constant(scaled), one_hot(labels, 4))->value.item();
    EXPECT_GT(std::abs(ce_base - ce_scaled), 1e-6);
  }
}

TEST(BatchMeanTriplet, GradientPassesCheck) {
  Rng rng(14);
  const std::vector<int> labels = {0, 1, 0, 2, 1};
  for (int rep = 0; rep < 10; ++rep) {
    Tensor raw({5, 3});
    for (std::size_t i = 0; i < raw.numel(); ++i) raw[i] = rng.uniform(-2, 2);
    const double err = ad::check_gradient(
        [&](const NodePtr& in) {
          return batchmean_triplet(normalized_logits(in, labels), 0.5).value;
        },
        raw, 1e-6);
    EXPECT_LT(err, 1e-4);
  }
}

// ---------------------------------------------------------------------------
// Contrastive ranking loss
// ---------------------------------------------------------------------------

TEST(ContrastiveRank, PairWithoutNegativesIsZero) {
  const std::vector<std::vector<double>> rows = {{1, 0}, {0, 1}};
  const ScalarLoss loss = contrastive_rank(make_batch(rows, {0, 0}), 0.2);
  EXPECT_FALSE(loss.degenerate);
  EXPECT_NEAR(loss.value->value.item(), 0.0, 1e-12);
}

TEST(ContrastiveRank, OnePairOneNegative) {
  // sim(a,p)=1, sim(a,n)=-1, T=0.2: term = ln(1 + e^{-10})
  const std::vector<std::vector<double>> rows = {{1, 0}, {1, 0}, {-1, 0}};
  const ScalarLoss loss = contrastive_rank(make_batch(rows, {0, 0, 1}), 0.2);
  EXPECT_NEAR(loss.value->value.item(), std::log1p(std::exp(-10.0)), 1e-12);
  EXPECT_NEAR(loss.value->value.item(), 4.54e-5, 1e-7);
}

TEST(ContrastiveRank, SingletonIsDegenerateZero) {
  const std::vector<std::vector<double>> rows = {{1, 0}};
  const ScalarLoss loss = contrastive_rank(make_batch(rows, {0}), 0.2);
  EXPECT_TRUE(loss.degenerate);
  EXPECT_DOUBLE_EQ(loss.value->value.item(), 0.0);
}

TEST(ContrastiveRank, RejectsNonpositiveTemperature) {
  const std::vector<std::vector<double>> rows = {{1, 0}, {0, 1}};
  EXPECT_THROW(contrastive_rank(make_batch(rows, {0, 0}), 0.0), ConfigError);
  EXPECT_THROW(contrastive_rank(make_batch(rows, {0, 0}), -1.0), ConfigError);
}

TEST(ContrastiveRank, MatchesBruteForceOnSixRows) {
  Rng rng(15);
  const auto rows = random_unit_rows(6, 4, rng);
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  const double got =
      contrastive_rank(make_batch(rows, labels), 0.2).value->value.item();
  const double want = ct_oracle(rows, labels, 0.2);
  EXPECT_NEAR(got, want, 1e-10 * std::max(1.0, std::abs(want)));
}

TEST(ContrastiveRank, OracleEquivalenceOverRandomInstances) {
  Rng rng(16);
  for (int seed_rep = 0; seed_rep < 100; ++seed_rep) {
    const std::size_t n = 2 + rng.uniform_index(7);
    const std::size_t c = 2 + rng.uniform_index(4);
    const auto rows = random_unit_rows(n, c, rng);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_index(3));
    const double got =
        contrastive_rank(make_batch(rows, labels), 0.2).value->value.item();
    const double want = ct_oracle(rows, labels, 0.2);
    ASSERT_NEAR(got, want, 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST(ContrastiveRank, PermutationInvariant) {
  Rng rng(17);
  const auto rows = random_unit_rows(6, 3, rng);
  const std::vector<int> labels = {0, 0, 1, 1, 2, 2};
  const double base =
      contrastive_rank(make_batch(rows, labels), 0.2).value->value.item();
  std::vector<std::size_t> perm = {5, 2, 0, 4, 1, 3};
  std::vector<std::vector<double>> prows;
  std::vector<int> plabels;
  for (std::size_t i : perm) {
    prows.push_back(rows[i]);
    plabels.push_back(labels[i]);
  }
  const double permuted =
      contrastive_rank(make_batch(prows, plabels), 0.2).value->value.item();
  EXPECT_NEAR(base, permuted, 1e-12);
}

TEST(ContrastiveRank, GradientPassesCheck) {
  Rng rng(18);
  const std::vector<int> labels = {0, 0, 1, 1};
  for (int rep = 0; rep < 10; ++rep) {
    Tensor raw({4, 3});
    for (std::size_t i = 0; i < raw.numel(); ++i) raw[i] = rng.uniform(-2, 2);
    const double err = ad::check_gradient(
        [&](const NodePtr& in) {
          return contrastive_rank(normalized_logits(in, labels), 0.2).value;
        },
        raw, 1e-6);
    EXPECT_LT(err, 1e-4);
  }
}

// ---------------------------------------------------------------------------
// Combined ranking loss
// ---------------------------------------------------------------------------

TEST(RankingLoss, EmptyUnlabeledLeavesLabeledTerm) {
  Rng rng(19);
  const auto rows = random_unit_rows(4, 3, rng);
  const std::vector<int> labels = {0, 1, 0, 1};
  Hyperparams hp;
  NormalizedLogitsBatch labeled = make_batch(rows, labels);
  NormalizedLogitsBatch empty{ad::constant(Tensor({0, 3})), {}};
  const ScalarLoss total =
      ranking_loss(RankKind::kBatchMeanTriplet, labeled, empty, hp);
  const ScalarLoss lab_only = batchmean_triplet(labeled, hp.margin);
  EXPECT_DOUBLE_EQ(total.value->value.item(), lab_only.value->value.item());
}

TEST(RankingLoss, ComposesBothTerms) {
  const std::vector<std::vector<double>> lab_rows = {{1, 0, 0}, {1, 0, 0}};
  Rng rng(20);
  const auto unl_rows = random_unit_rows(3, 3, rng);
  const std::vector<int> unl_labels = {0, 1, 0};
  Hyperparams hp;
  const ScalarLoss total =
      ranking_loss(RankKind::kBatchMeanTriplet, make_batch(lab_rows, {2, 2}),
                   make_batch(unl_rows, unl_labels), hp);
  const double expected =
      bm_oracle(lab_rows, {2, 2}, hp.margin) + bm_oracle(unl_rows, unl_labels, hp.margin);
  EXPECT_NEAR(total.value->value.item(), expected, 1e-10);
  EXPECT_NEAR(total.value->value.item(),
              0.974077 + bm_oracle(unl_rows, unl_labels, hp.margin), 1e-6);
}

TEST(RankingLoss, SingletonBatchesContrastiveIsZero) {
  Hyperparams hp;
  const std::vector<std::vector<double>> one = {{0, 1}};
  const ScalarLoss total =
      ranking_loss(RankKind::kContrastive, make_batch(one, {0}),
                   make_batch(one, {1}), hp);
  EXPECT_DOUBLE_EQ(total.value->value.item(), 0.0);
  EXPECT_TRUE(total.degenerate);
}

}  // namespace
}  // namespace rrm

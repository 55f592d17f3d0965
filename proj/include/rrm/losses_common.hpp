#pragma once

#include <vector>

#include "rrm/autodiff.hpp"

namespace rrm {

/// Scalar loss node plus a flag noting that the input was degenerate (empty
/// batch, no valid pairs) and a constant zero was returned.
struct ScalarLoss {
  ad::NodePtr value;
  bool degenerate = false;
};

inline ScalarLoss zero_loss() { return {ad::constant(Tensor::scalar(0.0)), true}; }

/// [n x n] matrix of pairwise Euclidean distances between the rows of x,
/// computed via the Gram matrix. Differentiable; coincident rows get a zero
/// subgradient through safe_sqrt.
inline ad::NodePtr pairwise_distances(const ad::NodePtr& x) {
  ad::NodePtr r = ad::row_sums(ad::mul(x, x));  // [n x 1] squared norms
  ad::NodePtr g = ad::matmul(x, ad::transpose(x));
  ad::NodePtr d2 =
      ad::add_colvec(ad::add_rowvec(ad::scale(g, -2.0), ad::transpose(r)), r);
  return ad::safe_sqrt(d2);
}

/// One-hot encoding of class indices.
inline Tensor one_hot(const std::vector<int>& labels, std::size_t class_count) {
  Tensor out({labels.size(), class_count});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw ContractError(detail::msg("one_hot: label ", labels[i],
                                      " outside [0, ", class_count, ")"));
    }
    out.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

}  // namespace rrm

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rrm/errors.hpp"
#include "rrm/tensor.hpp"

namespace rrm::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of a define-by-run computation graph. The graph is rebuilt per
/// training step; `backprop` routes this node's gradient to its parents.
struct Node {
  Tensor value;
  Tensor grad;  // same shape as value; populated by backward()
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;
};

/// Wraps a value that gradients do not flow into.
inline NodePtr constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

/// Wraps a trainable/differentiated value.
inline NodePtr leaf(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

namespace detail {

inline NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                         std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const NodePtr& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

inline void accumulate(Node& dst, const Tensor& delta) {
  if (!dst.requires_grad) return;
  std::vector<double>& g = dst.grad.data();
  const std::vector<double>& d = delta.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i];
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(rrm::detail::msg(op, ": shape mismatch ", shape_str(a),
                                      " vs ", shape_str(b)));
  }
}

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(rrm::detail::msg(op, ": expected rank-2 tensor, got ",
                                      shape_str(t)));
  }
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  detail::require_same_shape(a->value, b->value, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return detail::make_node(std::move(out), {a, b}, [](Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], self.grad);
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  detail::require_same_shape(a->value, b->value, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return detail::make_node(std::move(out), {a, b}, [](Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
    Node& b_node = *self.parents[1];
    if (b_node.requires_grad) {
      Tensor neg = self.grad;
      for (std::size_t i = 0; i < neg.numel(); ++i) neg[i] = -neg[i];
      detail::accumulate(b_node, neg);
    }
  });
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  detail::require_same_shape(a->value, b->value, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return detail::make_node(std::move(out), {a, b}, [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (an.requires_grad) {
      Tensor d = self.grad;
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] *= bn.value[i];
      detail::accumulate(an, d);
    }
    if (bn.requires_grad) {
      Tensor d = self.grad;
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] *= an.value[i];
      detail::accumulate(bn, d);
    }
  });
}

inline NodePtr scale(const NodePtr& a, double c) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return detail::make_node(std::move(out), {a}, [c](Node& self) {
    Tensor d = self.grad;
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] *= c;
    detail::accumulate(*self.parents[0], d);
  });
}

inline NodePtr neg(const NodePtr& a) { return scale(a, -1.0); }

inline NodePtr add_scalar(const NodePtr& a, double c) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c;
  return detail::make_node(std::move(out), {a}, [](Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
  });
}

inline NodePtr relu(const NodePtr& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], 0.0);
  return detail::make_node(std::move(out), {a}, [](Node& self) {
    Node& an = *self.parents[0];
    Tensor d = self.grad;
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < d.numel(); ++i) {
      if (an.value[i] <= 0.0) d[i] = 0.0;
    }
    detail::accumulate(an, d);
  });
}

/// Elementwise ln(1 + exp(x)), overflow-safe on both tails.
inline NodePtr softplus(const NodePtr& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double x = out[i];
    out[i] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return detail::make_node(std::move(out), {a}, [](Node& self) {
    Node& an = *self.parents[0];
    Tensor d = self.grad;
    for (std::size_t i = 0; i < d.numel(); ++i) {
      d[i] *= detail::sigmoid(an.value[i]);
    }
    detail::accumulate(an, d);
  });
}

inline NodePtr exp(const NodePtr& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  return detail::make_node(std::move(out), {a}, [](Node& self) {
    Tensor d = self.grad;
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] *= self.value[i];
    detail::accumulate(*self.parents[0], d);
  });
}

inline NodePtr log(const NodePtr& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (out[i] <= 0.0) {
      throw DomainError(rrm::detail::msg("log: nonpositive input ", out[i],
                                         " at flat index ", i));
    }
    out[i] = std::log(out[i]);
  }
  return detail::make_node(std::move(out), {a}, [](Node& self) {
    Node& an = *self.parents[0];
    Tensor d = self.grad;
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] /= an.value[i];
    detail::accumulate(an, d);
  });
}

/// sqrt(max(x, 0)); derivative 0 where x <= 0. Used for distances so that
/// coincident points produce a zero (sub)gradient instead of an infinity.
inline NodePtr safe_sqrt(const NodePtr& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = out[i] > 0.0 ? std::sqrt(out[i]) : 0.0;
  }
  return detail::make_node(std::move(out), {a}, [](Node& self) {
    Node& an = *self.parents[0];
    Tensor d = self.grad;
    for (std::size_t i = 0; i < d.numel(); ++i) {
      d[i] = an.value[i] > 0.0 ? d[i] * 0.5 / self.value[i] : 0.0;
    }
    detail::accumulate(an, d);
  });
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

namespace detail {

// C += A * B, with optional transposes. All rank-2.
inline void matmul_acc(const Tensor& a, bool ta, const Tensor& b, bool tb,
                       Tensor& c) {
  const std::size_t m = c.rows(), n = c.cols();
  const std::size_t k = ta ? a.rows() : a.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a.at(p, i) : a.at(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        c.at(i, j) += av * (tb ? b.at(j, p) : b.at(p, j));
      }
    }
  }
}

}  // namespace detail

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  detail::require_rank2(a->value, "matmul");
  detail::require_rank2(b->value, "matmul");
  if (a->value.cols() != b->value.rows()) {
    throw ShapeError(rrm::detail::msg("matmul: inner dimensions disagree, ",
                                      shape_str(a->value), " vs ",
                                      shape_str(b->value)));
  }
  Tensor out({a->value.rows(), b->value.cols()});
  detail::matmul_acc(a->value, false, b->value, false, out);
  return detail::make_node(std::move(out), {a, b}, [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (an.requires_grad) detail::matmul_acc(self.grad, false, bn.value, true, an.grad);
    if (bn.requires_grad) detail::matmul_acc(an.value, true, self.grad, false, bn.grad);
  });
}

inline NodePtr transpose(const NodePtr& a) {
  detail::require_rank2(a->value, "transpose");
  const std::size_t r = a->value.rows(), c = a->value.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a->value.at(i, j);
  return detail::make_node(std::move(out), {a}, [r, c](Node& self) {
    Node& an = *self.parents[0];
    if (!an.requires_grad) return;
    Tensor d({r, c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) d.at(i, j) = self.grad.at(j, i);
    detail::accumulate(an, d);
  });
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts
// ---------------------------------------------------------------------------

inline NodePtr sum(const NodePtr& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
  return detail::make_node(Tensor::scalar(s), {a}, [](Node& self) {
    Node& an = *self.parents[0];
    if (!an.requires_grad) return;
    Tensor d = Tensor::full(an.value.shape(), self.grad.item());
    detail::accumulate(an, d);
  });
}

inline NodePtr mean(const NodePtr& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a->value.numel()));
}

/// [n x m] -> [n x 1] row sums.
inline NodePtr row_sums(const NodePtr& a) {
  detail::require_rank2(a->value, "row_sums");
  const std::size_t n = a->value.rows(), m = a->value.cols();
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a->value.at(i, j);
    out.at(i, 0) = s;
  }
  return detail::make_node(std::move(out), {a}, [n, m](Node& self) {
    Node& an = *self.parents[0];
    if (!an.requires_grad) return;
    Tensor d({n, m});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) d.at(i, j) = self.grad.at(i, 0);
    detail::accumulate(an, d);
  });
}

/// a[i][j] + v[0][j]; v is [1 x m].
inline NodePtr add_rowvec(const NodePtr& a, const NodePtr& v) {
  detail::require_rank2(a->value, "add_rowvec");
  detail::require_rank2(v->value, "add_rowvec");
  if (v->value.rows() != 1 || v->value.cols() != a->value.cols()) {
    throw ShapeError(rrm::detail::msg("add_rowvec: expected [1x",
                                      a->value.cols(), "], got ",
                                      shape_str(v->value)));
  }
  const std::size_t n = a->value.rows(), m = a->value.cols();
  Tensor out = a->value;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) += v->value.at(0, j);
  return detail::make_node(std::move(out), {a, v}, [n, m](Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
    Node& vn = *self.parents[1];
    if (vn.requires_grad) {
      Tensor d({1, m});
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += self.grad.at(i, j);
        d.at(0, j) = s;
      }
      detail::accumulate(vn, d);
    }
  });
}

/// a[i][j] + v[i][0]; v is [n x 1].
inline NodePtr add_colvec(const NodePtr& a, const NodePtr& v) {
  detail::require_rank2(a->value, "add_colvec");
  detail::require_rank2(v->value, "add_colvec");
  if (v->value.cols() != 1 || v->value.rows() != a->value.rows()) {
    throw ShapeError(rrm::detail::msg("add_colvec: expected [", a->value.rows(),
                                      "x1], got ", shape_str(v->value)));
  }
  const std::size_t n = a->value.rows(), m = a->value.cols();
  Tensor out = a->value;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) += v->value.at(i, 0);
  return detail::make_node(std::move(out), {a, v}, [n, m](Node& self) {
    detail::accumulate(*self.parents[0], self.grad);
    Node& vn = *self.parents[1];
    if (vn.requires_grad) {
      Tensor d({n, 1});
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += self.grad.at(i, j);
        d.at(i, 0) = s;
      }
      detail::accumulate(vn, d);
    }
  });
}

/// Selects rows by index; gradient scatter-adds back.
inline NodePtr gather_rows(const NodePtr& a, std::vector<std::size_t> idx) {
  detail::require_rank2(a->value, "gather_rows");
  const std::size_t n = a->value.rows(), m = a->value.cols();
  for (std::size_t i : idx) {
    if (i >= n) {
      throw ShapeError(rrm::detail::msg("gather_rows: index ", i,
                                        " out of range for ",
                                        shape_str(a->value)));
    }
  }
  Tensor out({idx.size(), m});
  for (std::size_t k = 0; k < idx.size(); ++k)
    for (std::size_t j = 0; j < m; ++j) out.at(k, j) = a->value.at(idx[k], j);
  return detail::make_node(
      std::move(out), {a}, [idx = std::move(idx), n, m](Node& self) {
        Node& an = *self.parents[0];
        if (!an.requires_grad) return;
        Tensor d({n, m});
        for (std::size_t k = 0; k < idx.size(); ++k)
          for (std::size_t j = 0; j < m; ++j)
            d.at(idx[k], j) += self.grad.at(k, j);
        detail::accumulate(an, d);
      });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor softmax_rows_value(const Tensor& x) {
  require_rank2(x, "softmax");
  const std::size_t n = x.rows(), c = x.cols();
  Tensor y({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y.at(i, j) = std::exp(x.at(i, j) - mx);
      z += y.at(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) y.at(i, j) /= z;
  }
  return y;
}

}  // namespace detail

/// Row-wise softmax with max-subtraction.
inline NodePtr softmax(const NodePtr& a) {
  Tensor out = detail::softmax_rows_value(a->value);
  const std::size_t n = out.rows(), c = out.cols();
  return detail::make_node(std::move(out), {a}, [n, c](Node& self) {
    Node& an = *self.parents[0];
    if (!an.requires_grad) return;
    Tensor d({n, c});
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j)
        dot += self.grad.at(i, j) * self.value.at(i, j);
      for (std::size_t j = 0; j < c; ++j)
        d.at(i, j) = self.value.at(i, j) * (self.grad.at(i, j) - dot);
    }
    detail::accumulate(an, d);
  });
}

/// Row-wise log-softmax, numerically stable.
inline NodePtr log_softmax(const NodePtr& a) {
  detail::require_rank2(a->value, "log_softmax");
  const std::size_t n = a->value.rows(), c = a->value.cols();
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = a->value.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, a->value.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(a->value.at(i, j) - mx);
    const double lz = std::log(z);
    for (std::size_t j = 0; j < c; ++j)
      out.at(i, j) = a->value.at(i, j) - mx - lz;
  }
  return detail::make_node(std::move(out), {a}, [n, c](Node& self) {
    Node& an = *self.parents[0];
    if (!an.requires_grad) return;
    Tensor d({n, c});
    for (std::size_t i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < c; ++j) gsum += self.grad.at(i, j);
      for (std::size_t j = 0; j < c; ++j) {
        d.at(i, j) = self.grad.at(i, j) - std::exp(self.value.at(i, j)) * gsum;
      }
    }
    detail::accumulate(an, d);
  });
}

inline constexpr double kNormEps = 1e-12;

/// Scales each row to unit Euclidean norm. Throws DomainError naming the row
/// if its norm is <= 1e-12.
inline NodePtr l2_normalize(const NodePtr& a) {
  detail::require_rank2(a->value, "l2_normalize");
  const std::size_t n = a->value.rows(), c = a->value.cols();
  Tensor out({n, c});
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += a->value.at(i, j) * a->value.at(i, j);
    const double norm = std::sqrt(s);
    if (norm <= kNormEps) {
      throw DomainError(rrm::detail::msg("l2_normalize: degenerate row ", i,
                                         " with norm ", norm));
    }
    norms[i] = norm;
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = a->value.at(i, j) / norm;
  }
  return detail::make_node(
      std::move(out), {a}, [n, c, norms = std::move(norms)](Node& self) {
        Node& an = *self.parents[0];
        if (!an.requires_grad) return;
        Tensor d({n, c});
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j)
            dot += self.grad.at(i, j) * self.value.at(i, j);
          for (std::size_t j = 0; j < c; ++j) {
            d.at(i, j) =
                (self.grad.at(i, j) - self.value.at(i, j) * dot) / norms[i];
          }
        }
        detail::accumulate(an, d);
      });
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Node*> topo_order(const NodePtr& root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents.size()) {
      Node* next = node->parents[child++].get();
      if (visited.insert(next).second) stack.emplace_back(next, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents precede children
}

}  // namespace detail

/// Reverse-mode sweep from a scalar root. Zeroes the gradients of every
/// reachable node first, so repeated calls give identical results. After the
/// call each leaf's `grad` holds d(root)/d(leaf).
inline void backward(const NodePtr& root) {
  if (root->value.numel() != 1) {
    throw ContractError(rrm::detail::msg(
        "backward: root must be a scalar, got ", shape_str(root->value)));
  }
  std::vector<Node*> order = detail::topo_order(root);
  for (Node* n : order) {
    if (n->requires_grad) n->grad = Tensor::zeros(n->value.shape());
  }
  if (!root->requires_grad) return;  // graph has no differentiable leaves
  root->grad = Tensor::ones(root->value.shape());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backprop) n->backprop(*n);
  }
}

inline NodePtr operator+(const NodePtr& a, const NodePtr& b) { return add(a, b); }
inline NodePtr operator-(const NodePtr& a, const NodePtr& b) { return sub(a, b); }
inline NodePtr operator*(double c, const NodePtr& a) { return scale(a, c); }

}  // namespace rrm::ad

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rrm/autodiff.hpp"
#include "rrm/rng.hpp"

namespace rrm {

/// MLP split into a feature extractor and a linear classification head.
/// dims = [d_in, hidden..., d_f, C]: every layer but the last belongs to the
/// extractor; ReLU sits between extractor layers but not after the last one,
/// so representations are unconstrained in sign.
struct ModelParams {
  std::vector<std::size_t> dims;
  std::vector<ad::NodePtr> weights;  // [fan_in x fan_out] per layer
  std::vector<ad::NodePtr> biases;   // [1 x fan_out] per layer

  std::size_t input_dim() const { return dims.front(); }
  std::size_t rep_dim() const { return dims[dims.size() - 2]; }
  std::size_t class_count() const { return dims.back(); }
  std::size_t layer_count() const { return dims.size() - 1; }

  /// Parameters in a fixed order (W0, b0, W1, b1, ...). The optimizer and
  /// checkpoint format both rely on this order.
  std::vector<ad::NodePtr> all() const {
    std::vector<ad::NodePtr> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(weights[l]);
      out.push_back(biases[l]);
    }
    return out;
  }

  /// Name of the l-th entry of all(), for diagnostics.
  static std::string param_name(std::size_t flat_index) {
    const std::size_t layer = flat_index / 2;
    return (flat_index % 2 == 0 ? "W" : "b") + std::to_string(layer);
  }
};

struct ForwardOutput {
  ad::NodePtr representation;  // [n x d_f]
  ad::NodePtr logits;          // [n x C]
};

/// He-style initialization: weights uniform on +-sqrt(6/fan_in) (variance
/// 2/fan_in), biases zero. Deterministic given the seed.
inline ModelParams init_params(std::uint64_t seed,
                               const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) {
    throw ConfigError(detail::msg("init_params: need at least [d_in, C], got ",
                                  dims.size(), " dims"));
  }
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError("init_params: all layer dims must be positive");
  }
  Rng rng(seed);
  ModelParams p;
  p.dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
    Tensor w({fan_in, fan_out});
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.numel(); ++i) {
      w[i] = rng.uniform(-bound, bound);
    }
    p.weights.push_back(ad::leaf(std::move(w)));
    p.biases.push_back(ad::leaf(Tensor({1, fan_out})));
  }
  return p;
}

/// Pure function of (params, x): representation and logits for a batch.
inline ForwardOutput forward(const ModelParams& params, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != params.input_dim()) {
    throw ShapeError(detail::msg("forward: input ", shape_str(x),
                                 " incompatible with d_in=", params.input_dim()));
  }
  ad::NodePtr h = ad::constant(x);
  const std::size_t layers = params.layer_count();
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    h = ad::add_rowvec(ad::matmul(h, params.weights[l]), params.biases[l]);
    if (l + 2 < layers) h = ad::relu(h);  // no nonlinearity on the rep layer
  }
  ad::NodePtr logits = ad::add_rowvec(
      ad::matmul(h, params.weights[layers - 1]), params.biases[layers - 1]);
  return {h, logits};
}

// ---------------------------------------------------------------------------
// Checkpoint format: one plain-text header line "rrm-checkpoint <dims...>\n"
// followed by all parameters as 64-bit little-endian floats in all() order
// (each weight matrix row-major, then its bias vector).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_f64_le(std::ostream& os, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}

inline double read_f64_le(std::istream& is) {
  char buf[8];
  is.read(buf, 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i]))
            << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError(detail::msg("cannot open checkpoint for write: ", path));
  os << "rrm-checkpoint";
  for (std::size_t d : params.dims) os << " " << d;
  os << "\n";
  for (const ad::NodePtr& p : params.all()) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      detail::write_f64_le(os, p->value[i]);
    }
  }
  if (!os) throw ParseError(detail::msg("short write to checkpoint: ", path));
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(detail::msg("cannot open checkpoint: ", path));
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string magic;
  hs >> magic;
  if (magic != "rrm-checkpoint") {
    throw ParseError(detail::msg("bad checkpoint header in ", path, ": '",
                                 header, "'"));
  }
  std::vector<std::size_t> dims;
  std::size_t d;
  while (hs >> d) dims.push_back(d);
  if (dims.size() < 2) {
    throw ParseError(detail::msg("checkpoint header lists ", dims.size(),
                                 " dims, need at least 2"));
  }
  ModelParams p;
  p.dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Tensor w({dims[l], dims[l + 1]});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = detail::read_f64_le(is);
    Tensor b({1, dims[l + 1]});
    for (std::size_t i = 0; i < b.numel(); ++i) b[i] = detail::read_f64_le(is);
    if (!is) {
      throw ParseError(detail::msg("truncated checkpoint payload in ", path,
                                   " at layer ", l));
    }
    p.weights.push_back(ad::leaf(std::move(w)));
    p.biases.push_back(ad::leaf(std::move(b)));
  }
  return p;
}

}  // namespace rrm

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "rrm/errors.hpp"
#include "rrm/rng.hpp"
#include "rrm/tensor.hpp"

namespace rrm {

/// Immutable labeled dataset. Vector data is [N x d]; image data is
/// [N x h x w] with pixel values in [0, 1].
struct Dataset {
  enum class Kind { kVector, kImage };

  Tensor samples;
  std::vector<int> labels;
  int class_count = 0;
  Kind kind = Kind::kVector;

  std::size_t size() const { return labels.size(); }

  std::size_t sample_numel() const {
    return samples.numel() / std::max<std::size_t>(size(), 1);
  }

  std::size_t height() const { return samples.shape()[1]; }
  std::size_t width() const { return samples.shape()[2]; }

  /// Copies sample i out as a flat [d] tensor (images flattened row-major).
  Tensor sample(std::size_t i) const {
    const std::size_t d = sample_numel();
    Tensor out({d});
    for (std::size_t j = 0; j < d; ++j) out[j] = samples[i * d + j];
    return out;
  }

  /// Per-feature mean over all samples.
  Tensor feature_mean() const {
    const std::size_t d = sample_numel();
    Tensor m({d});
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < d; ++j) m[j] += samples[i * d + j];
    for (std::size_t j = 0; j < d; ++j) m[j] /= static_cast<double>(size());
    return m;
  }

  /// Mean of the per-feature standard deviations.
  double mean_feature_std() const {
    const std::size_t d = sample_numel();
    Tensor m = feature_mean();
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double var = 0.0;
      for (std::size_t i = 0; i < size(); ++i) {
        const double dv = samples[i * d + j] - m[j];
        var += dv * dv;
      }
      acc += std::sqrt(var / static_cast<double>(size()));
    }
    return acc / static_cast<double>(d);
  }
};

// ---------------------------------------------------------------------------
// Toy generators
// ---------------------------------------------------------------------------

/// Two interleaved half-circles in 2D. Class 0 is the upper half-circle
/// (cos t, sin t), class 1 is (1 - cos t, 0.5 - sin t), t evenly spaced on
/// [0, pi], plus isotropic Gaussian noise.
inline Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 2) throw ConfigError("make_two_moons: need n >= 2");
  const std::size_t n0 = (n + 1) / 2, n1 = n - n0;
  Dataset ds;
  ds.kind = Dataset::Kind::kVector;
  ds.class_count = 2;
  ds.samples = Tensor({n, 2});
  ds.labels.resize(n);
  Rng rng(seed);
  auto theta = [](std::size_t i, std::size_t count) {
    return count > 1 ? std::numbers::pi * static_cast<double>(i) /
                           static_cast<double>(count - 1)
                     : 0.0;
  };
  for (std::size_t i = 0; i < n0; ++i) {
    const double t = theta(i, n0);
    ds.samples.at(i, 0) = std::cos(t) + noise * rng.normal();
    ds.samples.at(i, 1) = std::sin(t) + noise * rng.normal();
    ds.labels[i] = 0;
  }
  for (std::size_t i = 0; i < n1; ++i) {
    const double t = theta(i, n1);
    ds.samples.at(n0 + i, 0) = 1.0 - std::cos(t) + noise * rng.normal();
    ds.samples.at(n0 + i, 1) = 0.5 - std::sin(t) + noise * rng.normal();
    ds.labels[n0 + i] = 1;
  }
  return ds;
}

namespace detail {

// Draws one glyph family into a size x size grid. cx/cy jittered center,
// r half-extent, v intensity.
inline void draw_glyph(Tensor& img, int family, double cx, double cy, double r,
                       double v) {
  const long size = static_cast<long>(img.rows());
  const double t = std::max(1.0, static_cast<double>(size) / 12.0);
  for (long y = 0; y < size; ++y) {
    for (long x = 0; x < size; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double dist = std::sqrt(dx * dx + dy * dy);
      bool on = false;
      switch (family) {
        case 0:  // horizontal bar
          on = std::abs(dy) <= t && std::abs(dx) <= r;
          break;
        case 1:  // vertical bar
          on = std::abs(dx) <= t && std::abs(dy) <= r;
          break;
        case 2:  // plus cross
          on = (std::abs(dy) <= t && std::abs(dx) <= r) ||
               (std::abs(dx) <= t && std::abs(dy) <= r);
          break;
        case 3:  // box outline
          on = std::max(std::abs(dx), std::abs(dy)) <= r &&
               std::max(std::abs(dx), std::abs(dy)) >= r - t;
          break;
        case 4:  // filled disk
          on = dist <= r;
          break;
        case 5:  // ring
          on = std::abs(dist - r) <= t;
          break;
        case 6:  // rising diagonal stroke
          on = std::abs(dx - dy) <= t && std::abs(dx) <= r && std::abs(dy) <= r;
          break;
        case 7:  // X glyph, both diagonals
          on = (std::abs(dx - dy) <= t || std::abs(dx + dy) <= t) &&
               std::abs(dx) <= r && std::abs(dy) <= r;
          break;
        default:
          break;
      }
      if (on) img.at(y, x) = v;
    }
  }
}

}  // namespace detail

/// Grayscale glyph images, one glyph family per class, with position and
/// intensity jitter. Labels cycle 0..classes-1 so classes stay balanced.
inline Dataset make_shapes(std::size_t n, std::size_t size, int classes,
                           std::uint64_t seed) {
  if (size < 8) throw ConfigError("make_shapes: need size >= 8");
  if (classes < 2 || classes > 8) {
    throw ConfigError(detail::msg("make_shapes: classes must be in [2, 8], got ",
                                  classes));
  }
  Dataset ds;
  ds.kind = Dataset::Kind::kImage;
  ds.class_count = classes;
  ds.samples = Tensor({n, size, size});
  ds.labels.resize(n);
  Rng rng(seed);
  const double half = static_cast<double>(size) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    ds.labels[i] = label;
    Tensor img({size, size});
    const double jitter = static_cast<double>(size) / 8.0;
    const double cx = half - 0.5 + rng.uniform(-jitter, jitter);
    const double cy = half - 0.5 + rng.uniform(-jitter, jitter);
    const double r = static_cast<double>(size) / 4.0 +
                     rng.uniform(0.0, static_cast<double>(size) / 12.0);
    const double v = rng.uniform(0.6, 1.0);
    detail::draw_glyph(img, label, cx, cy, r, v);
    for (std::size_t p = 0; p < img.numel(); ++p) {
      ds.samples[i * size * size + p] = img[p];
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// IDX ingestion (big-endian magic 0x803 images / 0x801 labels)
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_u32_be(const std::vector<unsigned char>& buf,
                                 std::size_t offset, const std::string& path) {
  if (offset + 4 > buf.size()) {
    throw ParseError(msg("truncated IDX file ", path, ": need 4 bytes at offset ",
                         offset, ", have ", buf.size() - offset));
  }
  return (static_cast<std::uint32_t>(buf[offset]) << 24) |
         (static_cast<std::uint32_t>(buf[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(buf[offset + 2]) << 8) |
         static_cast<std::uint32_t>(buf[offset + 3]);
}

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(msg("cannot open IDX file: ", path));
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(is),
                                    std::istreambuf_iterator<char>());
}

}  // namespace detail

/// Parses an IDX image/label file pair; pixels scaled to [0, 1].
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  const auto img_buf = detail::read_file(images_path);
  const auto lbl_buf = detail::read_file(labels_path);

  const std::uint32_t img_magic = detail::read_u32_be(img_buf, 0, images_path);
  if (img_magic != 0x00000803u) {
    throw ParseError(detail::msg("bad IDX image magic at offset 0 in ",
                                 images_path, ": got 0x", std::hex, img_magic));
  }
  const std::uint32_t lbl_magic = detail::read_u32_be(lbl_buf, 0, labels_path);
  if (lbl_magic != 0x00000801u) {
    throw ParseError(detail::msg("bad IDX label magic at offset 0 in ",
                                 labels_path, ": got 0x", std::hex, lbl_magic));
  }

  const std::uint32_t n_img = detail::read_u32_be(img_buf, 4, images_path);
  const std::uint32_t rows = detail::read_u32_be(img_buf, 8, images_path);
  const std::uint32_t cols = detail::read_u32_be(img_buf, 12, images_path);
  const std::uint32_t n_lbl = detail::read_u32_be(lbl_buf, 4, labels_path);
  if (n_img != n_lbl) {
    throw ParseError(detail::msg("IDX count mismatch: ", n_img, " images vs ",
                                 n_lbl, " labels"));
  }
  const std::size_t pixels = static_cast<std::size_t>(n_img) * rows * cols;
  if (img_buf.size() < 16 + pixels) {
    throw ParseError(detail::msg("truncated IDX image payload in ", images_path,
                                 " at offset ", img_buf.size(), ": expected ",
                                 16 + pixels, " bytes"));
  }
  if (lbl_buf.size() < 8 + n_lbl) {
    throw ParseError(detail::msg("truncated IDX label payload in ", labels_path,
                                 " at offset ", lbl_buf.size(), ": expected ",
                                 8 + n_lbl, " bytes"));
  }

  Dataset ds;
  ds.kind = Dataset::Kind::kImage;
  ds.samples = Tensor({n_img, rows, cols});
  ds.labels.resize(n_img);
  for (std::size_t i = 0; i < pixels; ++i) {
    ds.samples[i] = static_cast<double>(img_buf[16 + i]) / 255.0;
  }
  int max_label = 0;
  for (std::size_t i = 0; i < n_lbl; ++i) {
    ds.labels[i] = static_cast<int>(lbl_buf[8 + i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  return ds;
}

// ---------------------------------------------------------------------------
// SSL splitting
// ---------------------------------------------------------------------------

enum class OverlapMode { kOverlapping, kDisjointClasses };

struct SslSplit {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  OverlapMode overlap_mode = OverlapMode::kOverlapping;
  /// Number of classes the classifier head covers. Equals the dataset class
  /// count in overlapping mode, and the labeled-pool class count in
  /// disjoint-classes mode.
  int head_classes = 0;
};

namespace detail {

// Picks a stratified subset of n_labeled indices from `pool` (grouped by
// label). Quotas fill round-robin from the lowest class id, so counts stay as
// even as availability permits and n_labeled == pool size takes everything.
inline std::vector<std::size_t> stratify(
    const std::vector<std::size_t>& pool, const std::vector<int>& labels,
    const std::vector<int>& classes, std::size_t n_labeled, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (int c : classes) by_class[c] = {};
  for (std::size_t i : pool) {
    auto it = by_class.find(labels[i]);
    if (it != by_class.end()) it->second.push_back(i);
  }
  if (n_labeled > pool.size()) {
    std::ostringstream oss;
    oss << "infeasible stratification: requested " << n_labeled
        << " labeled samples but only " << pool.size()
        << " available; availability:";
    for (int c : classes) oss << " class " << c << "=" << by_class[c].size();
    throw ConfigError(oss.str());
  }

  const std::size_t c_count = classes.size();
  std::vector<std::size_t> quotas(c_count, 0);
  std::size_t remaining = n_labeled;
  while (remaining > 0) {
    for (std::size_t k = 0; k < c_count && remaining > 0; ++k) {
      if (quotas[k] < by_class[classes[k]].size()) {
        ++quotas[k];
        --remaining;
      }
    }
  }

  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < c_count; ++k) {
    auto& avail = by_class[classes[k]];
    rng.shuffle(avail);
    picked.insert(picked.end(), avail.begin(), avail.begin() + quotas[k]);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace detail

/// Carves test and validation sets out first, then a stratified labeled
/// subset; the rest of the training pool becomes unlabeled data. In
/// disjoint-classes mode the lower half of the class ids forms the labeled
/// pool, the upper half supplies all unlabeled samples, and leftover
/// labeled-pool samples are dropped so the two pools never share a class.
inline SslSplit split_ssl(const Dataset& ds, std::size_t n_labeled,
                          OverlapMode mode, std::uint64_t seed,
                          double val_fraction = 0.1,
                          double test_fraction = 0.2) {
  if (val_fraction < 0.0 || test_fraction < 0.0 ||
      val_fraction + test_fraction >= 1.0) {
    throw ConfigError("split_ssl: val/test fractions must be nonnegative and sum below 1");
  }
  Rng rng(seed);
  SslSplit split;
  split.overlap_mode = mode;

  std::vector<int> labeled_classes;
  std::vector<std::size_t> pool;  // candidates for test/val/labeled
  if (mode == OverlapMode::kOverlapping) {
    split.head_classes = ds.class_count;
    for (int c = 0; c < ds.class_count; ++c) labeled_classes.push_back(c);
    pool.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) pool[i] = i;
  } else {
    if (ds.class_count < 4) {
      throw ConfigError(detail::msg(
          "split_ssl: disjoint-classes mode needs at least 4 classes, got ",
          ds.class_count));
    }
    const int n_lab_classes = ds.class_count / 2;
    split.head_classes = n_lab_classes;
    for (int c = 0; c < n_lab_classes; ++c) labeled_classes.push_back(c);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] < n_lab_classes) {
        pool.push_back(i);
      } else {
        split.unlabeled.push_back(i);
      }
    }
  }

  rng.shuffle(pool);
  const std::size_t n_test =
      static_cast<std::size_t>(test_fraction * static_cast<double>(pool.size()));
  const std::size_t n_val =
      static_cast<std::size_t>(val_fraction * static_cast<double>(pool.size()));
  split.test.assign(pool.begin(), pool.begin() + n_test);
  split.validation.assign(pool.begin() + n_test, pool.begin() + n_test + n_val);
  std::vector<std::size_t> train(pool.begin() + n_test + n_val, pool.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.validation.begin(), split.validation.end());

  split.labeled =
      detail::stratify(train, ds.labels, labeled_classes, n_labeled, rng);

  if (mode == OverlapMode::kOverlapping) {
    std::vector<bool> is_labeled(ds.size(), false);
    for (std::size_t i : split.labeled) is_labeled[i] = true;
    for (std::size_t i : train) {
      if (!is_labeled[i]) split.unlabeled.push_back(i);
    }
    std::sort(split.unlabeled.begin(), split.unlabeled.end());
  }
  return split;
}

}  // namespace rrm

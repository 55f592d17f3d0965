#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "rrm/data.hpp"
#include "rrm/rng.hpp"
#include "rrm/tensor.hpp"

namespace rrm {

/// Stochastic augmentation knobs. A weak policy must keep cutout_frac and
/// jitter_scale at zero.
struct AugmentPolicy {
  enum class Kind { kWeak, kStrong };

  Kind kind = Kind::kWeak;
  double noise_sigma = 0.0;  // vector data: additive Gaussian noise
  int shift_max = 0;         // image data: pad-and-crop shift in pixels
  double flip_prob = 0.0;    // image data: horizontal flip probability
  double cutout_frac = 0.0;  // strong only: fraction of area masked to the mean
  double jitter_scale = 0.0; // strong only: multiplicative intensity jitter

  void validate() const {
    auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!in01(flip_prob) || !in01(cutout_frac)) {
      throw ConfigError("augment policy: flip_prob and cutout_frac must be in [0,1]");
    }
    if (kind == Kind::kWeak && (cutout_frac != 0.0 || jitter_scale != 0.0)) {
      throw ConfigError("weak augment policy must have cutout_frac == 0 and jitter_scale == 0");
    }
    if (noise_sigma < 0.0 || shift_max < 0 || jitter_scale < 0.0) {
      throw ConfigError("augment policy: knobs must be nonnegative");
    }
  }
};

/// Applies weak/strong policies to samples of one dataset. Holds the dataset
/// statistics the transforms need (mean sample for cutout fill, [0,1] clamp
/// for images). Pure function of (sample, rng state).
class Augmenter {
 public:
  Augmenter(const Dataset& ds, AugmentPolicy weak, AugmentPolicy strong)
      : weak_(weak),
        strong_(strong),
        image_(ds.kind == Dataset::Kind::kImage),
        height_(image_ ? ds.height() : 0),
        width_(image_ ? ds.width() : 0),
        mean_sample_(ds.feature_mean()) {
    weak_.validate();
    strong_.validate();
    if (weak_.kind != AugmentPolicy::Kind::kWeak ||
        strong_.kind != AugmentPolicy::Kind::kStrong) {
      throw ConfigError("Augmenter: policies must be (weak, strong)");
    }
  }

  /// Images: pad-and-crop shift plus horizontal flip. Vectors: additive
  /// Gaussian noise. RNG draw order: shift dy, dx, flip (images) or one
  /// normal per coordinate (vectors).
  Tensor weak(const Tensor& x, Rng& rng) const { return apply_weak(x, rng, weak_); }

  /// weak -> intensity jitter (clamped to [0,1] for images) -> cutout of a
  /// mean-valued patch covering cutout_frac of the sample.
  Tensor strong(const Tensor& x, Rng& rng) const {
    Tensor out = apply_weak(x, rng, strong_);
    if (strong_.jitter_scale > 0.0) {
      const double f = 1.0 + rng.uniform(-strong_.jitter_scale, strong_.jitter_scale);
      for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] *= f;
        if (image_) out[i] = std::clamp(out[i], 0.0, 1.0);
      }
    }
    if (strong_.cutout_frac > 0.0) cutout(out, rng);
    return out;
  }

  const AugmentPolicy& weak_policy() const { return weak_; }
  const AugmentPolicy& strong_policy() const { return strong_; }

 private:
  Tensor apply_weak(const Tensor& x, Rng& rng, const AugmentPolicy& p) const {
    if (!image_) {
      Tensor out = x;
      if (p.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < out.numel(); ++i) {
          out[i] += rng.normal(0.0, p.noise_sigma);
        }
      }
      return out;
    }
    Tensor out = x;
    long dy = 0, dx = 0;
    if (p.shift_max > 0) {
      dy = rng.uniform_int(-p.shift_max, p.shift_max);
      dx = rng.uniform_int(-p.shift_max, p.shift_max);
    }
    bool flip = p.flip_prob > 0.0 && rng.uniform() < p.flip_prob;
    if (dy == 0 && dx == 0 && !flip) return out;
    const long h = static_cast<long>(height_), w = static_cast<long>(width_);
    for (long y = 0; y < h; ++y) {
      for (long xx = 0; xx < w; ++xx) {
        long sy = y - dy;
        long sx = xx - dx;
        if (flip) sx = w - 1 - sx;
        double v = 0.0;  // zero padding outside the grid
        if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
          v = x[static_cast<std::size_t>(sy * w + sx)];
        }
        out[static_cast<std::size_t>(y * w + xx)] = v;
      }
    }
    return out;
  }

  void cutout(Tensor& out, Rng& rng) const {
    const double frac = strong_.cutout_frac;
    if (!image_) {
      const std::size_t d = out.numel();
      const std::size_t len = std::min<std::size_t>(
          d, static_cast<std::size_t>(std::llround(frac * static_cast<double>(d))));
      if (len == 0) return;
      const std::size_t start = rng.uniform_index(d - len + 1);
      for (std::size_t i = start; i < start + len; ++i) out[i] = mean_sample_[i];
      return;
    }
    const double side_scale = std::sqrt(frac);
    const std::size_t sh = std::min<std::size_t>(
        height_, static_cast<std::size_t>(
                     std::llround(side_scale * static_cast<double>(height_))));
    const std::size_t sw = std::min<std::size_t>(
        width_, static_cast<std::size_t>(
                    std::llround(side_scale * static_cast<double>(width_))));
    if (sh == 0 || sw == 0) return;
    const std::size_t top = rng.uniform_index(height_ - sh + 1);
    const std::size_t left = rng.uniform_index(width_ - sw + 1);
    for (std::size_t y = top; y < top + sh; ++y) {
      for (std::size_t x = left; x < left + sw; ++x) {
        out[y * width_ + x] = mean_sample_[y * width_ + x];
      }
    }
  }

  AugmentPolicy weak_;
  AugmentPolicy strong_;
  bool image_;
  std::size_t height_, width_;
  Tensor mean_sample_;
};

/// Default knobs for toy data: weak {shift 2, flip 0.5, noise
/// 0.05 * mean feature std}; strong adds {jitter 0.3, cutout 0.25}.
inline std::pair<AugmentPolicy, AugmentPolicy> default_policies(
    const Dataset& ds, double noise_scale = 0.05, int shift_max = 2,
    double flip_prob = 0.5, double jitter_scale = 0.3,
    double cutout_frac = 0.25) {
  AugmentPolicy weak;
  weak.kind = AugmentPolicy::Kind::kWeak;
  AugmentPolicy strong;
  strong.kind = AugmentPolicy::Kind::kStrong;
  if (ds.kind == Dataset::Kind::kVector) {
    weak.noise_sigma = noise_scale * ds.mean_feature_std();
    strong.noise_sigma = weak.noise_sigma;
  } else {
    weak.shift_max = shift_max;
    weak.flip_prob = flip_prob;
    strong.shift_max = shift_max;
    strong.flip_prob = flip_prob;
  }
  strong.jitter_scale = jitter_scale;
  strong.cutout_frac = cutout_frac;
  return {weak, strong};
}

}  // namespace rrm

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace rrm {

namespace detail {

// splitmix64 finalizer; good avalanche for seed derivation.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Named random streams. Each stochastic subsystem owns a stream derived from
/// (master seed, stream, index), so disabling one subsystem never perturbs
/// another. This is what makes the loss-weight reduction identities
/// bit-exact.
enum class RngStream : std::uint64_t {
  kDataGen = 1,
  kSplit = 2,
  kModelInit = 3,
  kLabeledBatch = 4,
  kUnlabeledBatch = 5,
  kAugLabeled = 6,
  kAugUnlabeledWeak = 7,
  kAugUnlabeledStrong = 8,
  kReferences = 9,
};

inline std::uint64_t derive_seed(std::uint64_t master, RngStream stream,
                                 std::uint64_t index = 0) {
  std::uint64_t s = detail::mix64(master);
  s = detail::mix64(s ^ static_cast<std::uint64_t>(stream));
  return detail::mix64(s ^ index);
}

/// Deterministic generator. Distribution mappings are implemented here rather
/// than with std:: distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Integer uniform in [lo, hi] inclusive.
  long uniform_int(long lo, long hi) {
    return lo + static_cast<long>(
                    uniform_index(static_cast<std::size_t>(hi - lo + 1)));
  }

  /// Gaussian via Box-Muller. Two engine draws per sample.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Fisher-Yates shuffle (std::shuffle is implementation-defined).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace rrm

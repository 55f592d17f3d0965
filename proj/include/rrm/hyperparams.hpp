#pragma once

#include "rrm/errors.hpp"

namespace rrm {

/// Training objective constants. Defaults are the single hyperparameter set
/// used across all experiments: B=64, mu=7, tau=0.95, m=0.5, T=0.2, psi=0.5,
/// phi=0.3, lambda_u = lambda_r = lambda_s = 1.
struct Hyperparams {
  int batch_size = 64;       // B, labeled batch size
  int mu = 7;                // unlabeled batch = mu * B
  double tau = 0.95;         // pseudo-label confidence threshold
  double margin = 0.5;       // m, BatchMean Triplet margin
  double temperature = 0.2;  // T, contrastive temperature
  double psi = 0.5;          // pair-label distance threshold
  double phi = 0.3;          // feature contrastive margin
  double lambda_u = 1.0;
  double lambda_r = 1.0;
  double lambda_s = 1.0;

  void validate() const {
    if (batch_size < 1) throw ConfigError("hp.B must be >= 1");
    if (mu < 1) throw ConfigError("hp.mu must be >= 1");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("hp.tau must be in (0, 1]");
    if (margin < 0.0) throw ConfigError("hp.m must be >= 0");
    if (temperature <= 0.0) throw ConfigError("hp.T must be > 0");
    if (psi <= 0.0) throw ConfigError("hp.psi must be > 0");
    if (phi <= 0.0) throw ConfigError("hp.phi must be > 0");
    if (lambda_u < 0.0 || lambda_r < 0.0 || lambda_s < 0.0) {
      throw ConfigError("hp loss weights must be >= 0");
    }
  }
};

}  // namespace rrm

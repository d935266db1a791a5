#pragma once

// SDF -> density conversion (Laplace CDF, single scale beta with
// alpha = 1/beta) and the geometric beta annealing schedule.

#include <cmath>
#include <stdexcept>

namespace tpsdf {

struct DensityParams {
  double beta = 0.1;  // alpha_den is tied to 1/beta

  void validate() const {
    if (!(beta > 0)) throw std::invalid_argument("density beta must be positive");
  }
};

// sigma = (1/beta) * Psi_beta(-s), Psi the Laplace CDF with scale beta.
template <typename T>
inline T sdf_to_density(T s, T beta) {
  if (s >= 0) return std::exp(-s / beta) / (2 * beta);
  return (T(1) - std::exp(s / beta) / 2) / beta;
}

// d sigma / d s = -exp(-|s|/beta) / (2 beta^2), continuous at s = 0.
template <typename T>
inline T sdf_to_density_deriv(T s, T beta) {
  return -std::exp(-std::abs(s) / beta) / (2 * beta * beta);
}

// Geometric interpolation from beta0 down to beta_end across the fit.
inline double beta_schedule(int64_t iter, int64_t total, double beta0, double beta_end) {
  if (!(beta0 > 0) || !(beta_end > 0)) throw std::invalid_argument("beta endpoints must be positive");
  if (total <= 0 || iter <= 0) return beta0;
  if (iter >= total) return beta_end;
  double f = double(iter) / double(total);
  return beta0 * std::pow(beta_end / beta0, f);
}

}  // namespace tpsdf

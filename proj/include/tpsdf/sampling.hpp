#pragma once

// Hierarchical ray sampling: stratified coarse samples over [near, far],
// then inverse-CDF fine samples from the piecewise-constant PDF given by
// the coarse weights. Sample positions are treated as non-differentiable
// inputs by the trainer (standard stop-gradient on importance sampling).

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "tpsdf/rng.hpp"

namespace tpsdf {

struct SamplingConfig {
  int n_coarse = 48;
  int n_fine = 64;
  bool jitter = true;

  void validate() const {
    if (n_coarse < 2) throw std::invalid_argument("n_coarse must be >= 2");
    if (n_fine < 0) throw std::invalid_argument("n_fine must be >= 0");
  }
};

// One sample per stratum; bin midpoints when jitter is off.
inline void sample_coarse(double near, double far, int n, bool jitter, Rng& rng,
                          std::vector<double>& out) {
  out.resize(size_t(n));
  const double width = (far - near) / n;
  for (int k = 0; k < n; ++k) {
    double u = jitter ? rng.uniform() : 0.5;
    out[size_t(k)] = near + (k + u) * width;
  }
}

// Inverse-CDF samples from bin weights (+1e-5 floor; uniform when all
// weights vanish). u values are stratified, so the output is ascending.
inline void sample_fine(double near, double far, const std::vector<double>& bin_weights,
                        int n_fine, bool jitter, Rng& rng, std::vector<double>& out) {
  out.clear();
  if (n_fine <= 0) return;
  const size_t nb = bin_weights.size();
  if (nb == 0) throw std::invalid_argument("sample_fine needs at least one bin");
  std::vector<double> cdf(nb + 1, 0.0);
  for (size_t k = 0; k < nb; ++k) {
    double w = bin_weights[k];
    if (w < 0) throw std::invalid_argument("sample_fine weights must be non-negative");
    cdf[k + 1] = cdf[k] + w + 1e-5;
  }
  const double total = cdf[nb];
  const double bin_width = (far - near) / double(nb);
  out.resize(size_t(n_fine));
  size_t bin = 0;
  for (int j = 0; j < n_fine; ++j) {
    double uj = (j + (jitter ? rng.uniform() : 0.5)) / n_fine * total;
    while (bin + 1 < nb && cdf[bin + 1] < uj) ++bin;
    double frac = (uj - cdf[bin]) / (cdf[bin + 1] - cdf[bin]);
    out[size_t(j)] = near + (double(bin) + frac) * bin_width;
  }
}

// Sorted union of coarse and fine samples, deduplicated within 1e-9.
inline void merge_samples(const std::vector<double>& coarse, const std::vector<double>& fine,
                          std::vector<double>& out) {
  out.resize(coarse.size() + fine.size());
  std::merge(coarse.begin(), coarse.end(), fine.begin(), fine.end(), out.begin());
  size_t w = 0;
  for (size_t i = 0; i < out.size(); ++i) {
    if (w > 0 && out[i] - out[w - 1] < 1e-9) continue;
    out[w++] = out[i];
  }
  out.resize(w);
}

}  // namespace tpsdf

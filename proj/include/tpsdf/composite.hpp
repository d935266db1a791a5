#pragma once

// Front-to-back alpha compositing over white background:
//   alpha_i = 1 - exp(-sigma_i * delta_i), w_i = alpha_i * prod_{j<i}(1-alpha_j)
// wsum is computed as 1 - final transmittance, which telescopes to
// sum(w_i) and stays in [0,1] exactly in floating point. The backward pass
// runs the transmittance recursion in reverse; no divisions by (1-alpha).

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tpsdf/math.hpp"

namespace tpsdf {

template <typename T>
struct CompositeOut {
  Vec3<T> color{1, 1, 1};     // white background
  T depth_raw = 0;            // weight-normalized expected depth
  T wsum = 0;
  Vec3<T> normal{0, 0, 0};    // unit where defined, zero when degenerate
  bool normal_degenerate = true;
};

inline constexpr double kWsumBackgroundCutoff = 0.5;  // depth masked below this
inline constexpr double kDepthNormEps = 1e-6;

// ts ascending (length m), deltas[i] = ts[i+1]-ts[i], last = t_far - ts[m-1].
// rgbs/normals are 3-interleaved. weights_out (optional, length m) receives
// the per-sample compositing weights for importance sampling and tests.
template <typename T>
inline CompositeOut<T> composite(const T* ts, const T* sigmas, const T* rgbs, const T* normals,
                                 int m, T t_far, T* weights_out = nullptr) {
  if (m < 1) throw std::invalid_argument("composite needs at least one sample");
  CompositeOut<T> out;
  T trans = 1;
  Vec3<T> color_acc{0, 0, 0};
  Vec3<T> normal_acc{0, 0, 0};
  T depth_acc = 0;
  for (int i = 0; i < m; ++i) {
    T delta = (i + 1 < m ? ts[i + 1] - ts[i] : t_far - ts[i]);
    T alpha = -std::expm1(-sigmas[i] * delta);
    T w = alpha * trans;
    if (weights_out) weights_out[i] = w;
    color_acc += Vec3<T>{rgbs[3 * i], rgbs[3 * i + 1], rgbs[3 * i + 2]} * w;
    normal_acc += Vec3<T>{normals[3 * i], normals[3 * i + 1], normals[3 * i + 2]} * w;
    depth_acc += w * ts[i];
    trans *= (T(1) - alpha);
  }
  out.wsum = T(1) - trans;
  out.color = color_acc + Vec3<T>{trans, trans, trans};
  out.depth_raw = depth_acc / std::max(out.wsum, T(kDepthNormEps));
  T vn = norm(normal_acc);
  if (vn >= T(1e-8)) {
    out.normal = normal_acc / vn;
    out.normal_degenerate = false;
  }
  return out;
}

// Reverse-mode derivatives of composite() with respect to sigmas, rgbs and
// normals (sample positions are fixed inputs). Gradients are accumulated
// into dsigmas/drgbs/dnormals.
template <typename T>
inline void composite_backward(const T* ts, const T* sigmas, const T* rgbs, const T* normals,
                               int m, T t_far, const Vec3<T>& dcolor, T ddepth_raw,
                               const Vec3<T>& dnormal, T dwsum, T* dsigmas, T* drgbs,
                               T* dnormals) {
  // Recompute the forward pass quantities.
  T trans = 1;
  Vec3<T> normal_acc{0, 0, 0};
  T depth_acc = 0, wsum;
  std::vector<T> alpha(static_cast<size_t>(m)), transmittance(static_cast<size_t>(m)), weight(static_cast<size_t>(m)), delta(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    delta[size_t(i)] = (i + 1 < m ? ts[i + 1] - ts[i] : t_far - ts[i]);
    alpha[size_t(i)] = -std::expm1(-sigmas[i] * delta[size_t(i)]);
    transmittance[size_t(i)] = trans;
    weight[size_t(i)] = alpha[size_t(i)] * trans;
    normal_acc += Vec3<T>{normals[3 * i], normals[3 * i + 1], normals[3 * i + 2]} * weight[size_t(i)];
    depth_acc += weight[size_t(i)] * ts[i];
    trans *= (T(1) - alpha[size_t(i)]);
  }
  wsum = T(1) - trans;

  // Depth normalization.
  T wc = std::max(wsum, T(kDepthNormEps));
  T dS_t = ddepth_raw / wc;
  T dwsum_total = dwsum;
  if (wsum > T(kDepthNormEps)) dwsum_total += -ddepth_raw * depth_acc / (wc * wc);

  // Normal normalization: dV = (I - N N^T) dN / ||V||.
  Vec3<T> dV{0, 0, 0};
  T vn = norm(normal_acc);
  if (vn >= T(1e-8)) {
    Vec3<T> N = normal_acc / vn;
    dV = (dnormal - N * dot(N, dnormal)) / vn;
  }

  // Final transmittance feeds the background color and wsum.
  T dtrans = -dwsum_total + dcolor.x + dcolor.y + dcolor.z;  // bg = (1,1,1)

  for (int i = m - 1; i >= 0; --i) {
    Vec3<T> rgb_i{rgbs[3 * i], rgbs[3 * i + 1], rgbs[3 * i + 2]};
    Vec3<T> n_i{normals[3 * i], normals[3 * i + 1], normals[3 * i + 2]};
    T dw = dot(dcolor, rgb_i) + dS_t * ts[i] + dot(dV, n_i);
    drgbs[3 * i] += dcolor.x * weight[size_t(i)];
    drgbs[3 * i + 1] += dcolor.y * weight[size_t(i)];
    drgbs[3 * i + 2] += dcolor.z * weight[size_t(i)];
    dnormals[3 * i] += dV.x * weight[size_t(i)];
    dnormals[3 * i + 1] += dV.y * weight[size_t(i)];
    dnormals[3 * i + 2] += dV.z * weight[size_t(i)];
    // T_{i+1} = T_i (1 - alpha_i), w_i = alpha_i T_i.
    T dalpha = (dw - dtrans) * transmittance[size_t(i)];
    dtrans = dw * alpha[size_t(i)] + dtrans * (T(1) - alpha[size_t(i)]);
    dsigmas[i] += dalpha * delta[size_t(i)] * std::exp(-sigmas[i] * delta[size_t(i)]);
  }
}

}  // namespace tpsdf

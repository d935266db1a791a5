#pragma once

// Dense MLPs with batched Eigen forward/backward. The SDF branch uses
// softplus(beta=100) so the field stays C1 for finite differences; the RGB
// branch uses ReLU hidden units and a sigmoid output.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tpsdf/triplane.hpp"

namespace tpsdf {

enum class Hidden { softplus100, relu };
enum class Output { identity, sigmoid };

template <typename T>
inline T softplus100(T x) {
  // (1/100) * log(1 + exp(100 x)), linear branch for large x.
  if (x > T(0.25)) return x + std::log1p(std::exp(T(-100) * x)) / T(100);
  return std::log1p(std::exp(T(100) * x)) / T(100);
}

template <typename T>
inline T softplus100_deriv(T x) {
  // logistic(100 x), evaluated on the bounded-exponent side.
  if (x >= 0) return T(1) / (T(1) + std::exp(T(-100) * x));
  T e = std::exp(T(100) * x);
  return e / (T(1) + e);
}

template <typename T>
inline T sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
struct Mlp {
  std::vector<int> widths;   // [in, hidden..., out]
  std::vector<MatX<T>> W;    // W[l]: widths[l+1] x widths[l]
  std::vector<VecX<T>> b;
  Hidden hidden = Hidden::softplus100;
  Output output = Output::identity;

  int layer_count() const { return int(W.size()); }
  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }

  void allocate(const std::vector<int>& widths_) {
    if (widths_.size() < 2) throw std::invalid_argument("MLP needs at least two widths");
    for (int w : widths_)
      if (w <= 0) throw std::invalid_argument("MLP widths must be positive");
    widths = widths_;
    W.clear();
    b.clear();
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
      W.emplace_back(MatX<T>::Zero(widths[l + 1], widths[l]));
      b.emplace_back(VecX<T>::Zero(widths[l + 1]));
    }
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (size_t l = 0; l < W.size(); ++l) n += W[l].size() + b[l].size();
    return n;
  }
};

// Forward intermediates needed by the backward pass: layer inputs and
// hidden activation derivatives.
template <typename T>
struct MlpTrace {
  std::vector<MatX<T>> inputs;  // inputs[l] = input to layer l (inputs[0] = X)
  std::vector<MatX<T>> hderiv;  // hderiv[l] = h'(z_l) for hidden layers
  MatX<T> out;
};

template <typename T>
inline void apply_hidden(Hidden h, MatX<T>& z, MatX<T>* deriv) {
  if (h == Hidden::relu) {
    if (deriv) *deriv = (z.array() > T(0)).template cast<T>();
    z = z.cwiseMax(T(0));
    return;
  }
  // softplus(beta=100), branch-free: max(z,0) + log1p(exp(-|100 z|))/100.
  // The bounded exponent keeps both the value and the logistic derivative
  // stable for any input. t is materialized once; select branches must not
  // re-evaluate it.
  MatX<T> t = (-(z.array().abs() * T(100))).exp();  // in (0,1]
  if (deriv) {
    // logistic(100 z) = (z >= 0 ? 1 : t) / (1 + t).
    *deriv = (z.array() >= T(0)).select(MatX<T>::Ones(z.rows(), z.cols()), t).array() /
             (T(1) + t.array());
  }
  z = z.array().max(T(0)) + (T(1) + t.array()).log() / T(100);
}

// X: N x in. Returns N x out. Pass a trace to keep what backward needs.
template <typename T>
inline MatX<T> mlp_forward(const Mlp<T>& mlp, const MatX<T>& X, MlpTrace<T>* trace = nullptr) {
  if (X.cols() != mlp.in_dim())
    throw std::invalid_argument("MLP input width mismatch: got " + std::to_string(X.cols()) +
                                ", expected " + std::to_string(mlp.in_dim()));
  if (trace) {
    trace->inputs.clear();
    trace->hderiv.assign(size_t(mlp.layer_count()), MatX<T>());
  }
  MatX<T> a = X;
  const int L = mlp.layer_count();
  for (int l = 0; l < L; ++l) {
    if (trace) trace->inputs.push_back(std::move(a));
    const MatX<T>& in = trace ? trace->inputs.back() : a;
    MatX<T> z = in * mlp.W[size_t(l)].transpose();
    z.rowwise() += mlp.b[size_t(l)].transpose();
    if (l < L - 1) {
      apply_hidden(mlp.hidden, z, trace ? &trace->hderiv[size_t(l)] : nullptr);
    } else if (mlp.output == Output::sigmoid) {
      auto t = (-z.array().abs()).exp();
      z = (z.array() >= T(0)).select(T(1) / (T(1) + t), t / (T(1) + t));
    }
    a = std::move(z);
  }
  if (trace) trace->out = a;
  return a;
}

template <typename T>
struct MlpGrads {
  std::vector<MatX<T>> dW;
  std::vector<VecX<T>> db;

  void allocate(const Mlp<T>& mlp) {
    dW.clear();
    db.clear();
    for (size_t l = 0; l < mlp.W.size(); ++l) {
      dW.emplace_back(MatX<T>::Zero(mlp.W[l].rows(), mlp.W[l].cols()));
      db.emplace_back(VecX<T>::Zero(mlp.b[l].size()));
    }
  }

  void add(const MlpGrads& o) {
    for (size_t l = 0; l < dW.size(); ++l) {
      dW[l] += o.dW[l];
      db[l] += o.db[l];
    }
  }

  void zero() {
    for (auto& m : dW) m.setZero();
    for (auto& v : db) v.setZero();
  }
};

// Accumulates parameter gradients into `grads`; writes input gradients to
// dX when non-null. dOut is the loss gradient at the MLP output.
template <typename T>
inline void mlp_backward(const Mlp<T>& mlp, const MlpTrace<T>& trace, const MatX<T>& dOut,
                         MlpGrads<T>& grads, MatX<T>* dX = nullptr) {
  const int L = mlp.layer_count();
  MatX<T> delta = dOut;
  if (mlp.output == Output::sigmoid) {
    // d z = d y * y (1 - y)
    delta.array() *= trace.out.array() * (T(1) - trace.out.array());
  }
  for (int l = L - 1; l >= 0; --l) {
    grads.dW[size_t(l)].noalias() += delta.transpose() * trace.inputs[size_t(l)];
    grads.db[size_t(l)].noalias() += delta.colwise().sum().transpose();
    if (l == 0) {
      if (dX) dX->noalias() = delta * mlp.W[0];
      break;
    }
    MatX<T> da = delta * mlp.W[size_t(l)];
    da.array() *= trace.hderiv[size_t(l - 1)].array();
    delta = std::move(da);
  }
}

}  // namespace tpsdf

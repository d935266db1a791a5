#pragma once

// The learnable scene representation: a triplane plus an SDF MLP (sdf +
// latent head) and an RGB MLP. Initialization seeds the first two channels
// of every plane with that plane's coordinates and applies the usual
// geometric SDF init on top, so the untrained zero level set is a sphere
// of radius ~0.6 centered in the box.

#include <cstdint>
#include <string>
#include <vector>

#include "tpsdf/math.hpp"
#include "tpsdf/mlp.hpp"
#include "tpsdf/rng.hpp"
#include "tpsdf/triplane.hpp"

namespace tpsdf {

inline constexpr double kGeometricInitRadius = 0.6;

template <typename T>
struct TriplaneField {
  Triplane<T> planes;
  Mlp<T> sdf_mlp;  // feature(3C) -> [sdf, latent]
  Mlp<T> rgb_mlp;  // [feature(3C), latent, normal] -> rgb
  int latent_dim = 0;
  uint64_t seed = 0;
  int64_t iteration = 0;

  int feature_dim() const { return planes.feature_dim(); }
  // Default finite-difference step: half a plane cell.
  T default_eps() const { return T(1) / T(planes.res); }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : planes.plane) n += int64_t(p.size());
    return n + sdf_mlp.param_count() + rgb_mlp.param_count();
  }
};

struct FieldDims {
  int plane_res = 64;
  int plane_channels = 16;
  int latent_dim = 16;
  std::vector<int> sdf_hidden{64, 64};
  std::vector<int> rgb_hidden{64};
};

// Named views over every parameter array, in checkpoint declaration order.
template <typename T>
struct ParamBlock {
  std::string name;
  T* data;
  int64_t size;
};

template <typename T>
inline std::vector<ParamBlock<T>> param_blocks(TriplaneField<T>& f) {
  std::vector<ParamBlock<T>> blocks;
  const char* plane_names[3] = {"plane_xy", "plane_yz", "plane_xz"};
  for (int k = 0; k < 3; ++k)
    blocks.push_back({plane_names[k], f.planes.plane[size_t(k)].data(),
                      int64_t(f.planes.plane[size_t(k)].size())});
  auto add_mlp = [&](Mlp<T>& mlp, const std::string& prefix) {
    for (size_t l = 0; l < mlp.W.size(); ++l) {
      blocks.push_back({prefix + "_W" + std::to_string(l), mlp.W[l].data(), mlp.W[l].size()});
      blocks.push_back({prefix + "_b" + std::to_string(l), mlp.b[l].data(), mlp.b[l].size()});
    }
  };
  add_mlp(f.sdf_mlp, "sdf");
  add_mlp(f.rgb_mlp, "rgb");
  return blocks;
}

namespace detail {

// Distributes a weight on virtual coordinate inputs (x,y,z) over the
// coordinate-carrying feature channels. Channel layout per plane: ch0 = u,
// ch1 = v; each coordinate appears in exactly two planes.
template <typename T>
inline void add_coord_weight(MatX<T>& W, int row, int C, const Vec3<T>& w_xyz) {
  // x: plane XY ch0, plane XZ ch0
  W(row, 0) += w_xyz.x * T(0.5);
  W(row, 2 * C + 0) += w_xyz.x * T(0.5);
  // y: plane XY ch1, plane YZ ch0
  W(row, 1) += w_xyz.y * T(0.5);
  W(row, C + 0) += w_xyz.y * T(0.5);
  // z: plane YZ ch1, plane XZ ch1
  W(row, C + 1) += w_xyz.z * T(0.5);
  W(row, 2 * C + 1) += w_xyz.z * T(0.5);
}

}  // namespace detail

template <typename T>
inline TriplaneField<T> init_field(uint64_t seed, const FieldDims& dims) {
  if (dims.plane_res < 2 || dims.plane_channels < 2 || dims.latent_dim < 1)
    throw std::invalid_argument("field dims must be positive (plane needs >= 2 channels)");
  TriplaneField<T> f;
  f.seed = seed;
  f.latent_dim = dims.latent_dim;
  f.planes.allocate(dims.plane_res, dims.plane_channels);

  Rng root(seed);

  // Plane features: small noise, coordinate channels overwritten with the
  // node coordinates so linear coordinate reads survive interpolation.
  {
    Rng rng = root.stream("planes");
    for (int k = 0; k < 3; ++k)
      for (auto& v : f.planes.plane[size_t(k)]) v = T(rng.normal() * 0.01);
    const int R = dims.plane_res;
    for (int k = 0; k < 3; ++k)
      for (int v = 0; v < R; ++v)
        for (int u = 0; u < R; ++u) {
          T* node = f.planes.node(k, u, v);
          node[0] = T(-1) + T(2) * T(u) / T(R - 1);
          node[1] = T(-1) + T(2) * T(v) / T(R - 1);
        }
  }

  const int C = dims.plane_channels;
  const int feat = 3 * C;

  // SDF MLP, geometric init. The first hidden layer reads the point
  // coordinates along a Fibonacci-sphere set of directions u_i, middle
  // layers pass activations through, and the sdf head averages them:
  // (4/m) * sum_i relu(u_i . x) -> ||x|| as m grows, so the net starts out
  // as ||p|| - r with a few-percent directional ripple at m = 64.
  {
    std::vector<int> widths;
    widths.push_back(feat);
    for (int w : dims.sdf_hidden) widths.push_back(w);
    widths.push_back(1 + dims.latent_dim);
    f.sdf_mlp.allocate(widths);
    f.sdf_mlp.hidden = Hidden::softplus100;
    f.sdf_mlp.output = Output::identity;

    Rng rng = root.stream("sdf_mlp");
    const int L = f.sdf_mlp.layer_count();
    int m_eff = dims.sdf_hidden.empty() ? 0 : dims.sdf_hidden.front();
    for (int w : dims.sdf_hidden) m_eff = std::min(m_eff, w);
    for (int l = 0; l < L; ++l) {
      auto& W = f.sdf_mlp.W[size_t(l)];
      const int rows = int(W.rows()), cols = int(W.cols());
      T noise = T(1e-3);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) W(r, c) = T(rng.normal()) * noise;
      if (l == 0) {
        const int m = rows;
        for (int r = 0; r < m; ++r) {
          double zc = 1.0 - 2.0 * (r + 0.5) / m;
          double phi = r * kPi * (3.0 - std::sqrt(5.0));
          double s = std::sqrt(std::max(0.0, 1.0 - zc * zc));
          Vec3<T> u{T(s * std::cos(phi)), T(zc), T(s * std::sin(phi))};
          detail::add_coord_weight(W, r, C, u);
        }
      } else if (l < L - 1) {
        for (int r = 0; r < std::min(rows, cols); ++r) W(r, r) += T(1);
      } else {
        // sdf head: average the surviving direction units; latent rows keep
        // the small noise so training can grow them. The bias absorbs the
        // softplus floor the inactive units contribute at the origin.
        for (int c = 0; c < std::min(cols, m_eff); ++c) W(0, c) = T(4.0 / m_eff);
        double floor = std::log(2.0) / 100.0;
        for (size_t h = 1; h < dims.sdf_hidden.size(); ++h) floor = softplus100(floor);
        f.sdf_mlp.b[size_t(l)](0) = T(-kGeometricInitRadius - 4.0 * floor);
      }
    }
  }

  // RGB MLP: standard fan-in init, sigmoid output starts near mid gray.
  {
    std::vector<int> widths;
    widths.push_back(feat + dims.latent_dim + 3);
    for (int w : dims.rgb_hidden) widths.push_back(w);
    widths.push_back(3);
    f.rgb_mlp.allocate(widths);
    f.rgb_mlp.hidden = Hidden::relu;
    f.rgb_mlp.output = Output::sigmoid;

    Rng rng = root.stream("rgb_mlp");
    const int L = f.rgb_mlp.layer_count();
    for (int l = 0; l < L; ++l) {
      auto& W = f.rgb_mlp.W[size_t(l)];
      T std_dev = (l < L - 1) ? T(std::sqrt(2.0 / double(W.cols())))
                              : T(std::sqrt(1.0 / double(W.cols())));
      for (int r = 0; r < W.rows(); ++r)
        for (int c = 0; c < W.cols(); ++c) W(r, c) = T(rng.normal()) * std_dev;
    }
  }
  return f;
}

template <typename T>
inline TriplaneField<T> init_field(uint64_t seed, int plane_res, int plane_channels,
                                   int latent_dim, const std::vector<int>& sdf_hidden,
                                   const std::vector<int>& rgb_hidden) {
  FieldDims d;
  d.plane_res = plane_res;
  d.plane_channels = plane_channels;
  d.latent_dim = latent_dim;
  d.sdf_hidden = sdf_hidden;
  d.rgb_hidden = rgb_hidden;
  return init_field<T>(seed, d);
}

// decode_sdf: feature row -> (sdf, latent).
template <typename T>
inline void decode_sdf(const Mlp<T>& sdf_mlp, const MatX<T>& feat, VecX<T>& sdf, MatX<T>& latent) {
  MatX<T> out = mlp_forward(sdf_mlp, feat);
  sdf = out.col(0);
  latent = out.rightCols(out.cols() - 1);
}

// decode_rgb: [feature, latent, normal] -> rgb in (0,1).
template <typename T>
inline MatX<T> decode_rgb(const Mlp<T>& rgb_mlp, const MatX<T>& feat, const MatX<T>& latent,
                          const MatX<T>& normals) {
  MatX<T> in(feat.rows(), feat.cols() + latent.cols() + normals.cols());
  in << feat, latent, normals;
  return mlp_forward(rgb_mlp, in);
}

// Batched SDF-only evaluation (no latent copy-out) for meshing and the
// detached coarse pass.
template <typename T>
inline void eval_sdf_batch(const TriplaneField<T>& f, const Vec3<T>* pts, int64_t n,
                           VecX<T>& sdf) {
  MatX<T> feat;
  query_triplane_batch(f.planes, pts, n, feat);
  MatX<T> out = mlp_forward(f.sdf_mlp, feat);
  sdf = out.col(0);
}

template <typename T>
inline T eval_sdf(const TriplaneField<T>& f, const Vec3<T>& p) {
  VecX<T> sdf;
  eval_sdf_batch(f, &p, 1, sdf);
  return sdf(0);
}

// Central-difference SDF gradient over 6 evaluations.
template <typename T>
inline Vec3<T> field_gradient(const TriplaneField<T>& f, const Vec3<T>& p, T eps) {
  Vec3<T> stencil[6];
  for (int a = 0; a < 3; ++a) {
    stencil[2 * a] = p;
    stencil[2 * a][a] += eps;
    stencil[2 * a + 1] = p;
    stencil[2 * a + 1][a] -= eps;
  }
  VecX<T> s;
  eval_sdf_batch(f, stencil, 6, s);
  return {(s(0) - s(1)) / (2 * eps), (s(2) - s(3)) / (2 * eps), (s(4) - s(5)) / (2 * eps)};
}

// Normalized finite-difference normal; degenerate gradients fall back to +z.
template <typename T>
inline Vec3<T> field_normal(const TriplaneField<T>& f, const Vec3<T>& p, T eps,
                            bool* degenerate = nullptr) {
  if (!(eps > 0)) throw std::invalid_argument("field_normal requires eps > 0");
  Vec3<T> g = field_gradient(f, p, eps);
  T n = norm(g);
  if (n < T(1e-8)) {
    if (degenerate) *degenerate = true;
    return {0, 0, 1};
  }
  if (degenerate) *degenerate = false;
  return g / n;
}

}  // namespace tpsdf

#pragma once

// Three axis-aligned feature planes over the [-1,1]^3 box, queried by
// bilinear interpolation of the point's orthogonal projections. Plane
// layout (u,v): XY=(x,y), YZ=(y,z), XZ=(x,z); grid corners sit exactly at
// the box faces, so linear functions of the coordinates are reproduced
// exactly by the interpolation.

#include <Eigen/Dense>

#include <array>
#include <vector>

#include "tpsdf/math.hpp"

namespace tpsdf {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct Triplane {
  int res = 0;       // h_T = w_T
  int channels = 0;  // d_T
  // plane[k] has res*res rows of `channels` features, row index = v*res + u.
  std::array<std::vector<T>, 3> plane;

  void allocate(int res_, int channels_) {
    res = res_;
    channels = channels_;
    for (auto& p : plane) p.assign(size_t(res) * res * channels, T(0));
  }

  T* node(int k, int u, int v) { return plane[size_t(k)].data() + (size_t(v) * res + u) * channels; }
  const T* node(int k, int u, int v) const {
    return plane[size_t(k)].data() + (size_t(v) * res + u) * channels;
  }

  int feature_dim() const { return 3 * channels; }
};

// The two in-plane coordinates of a point for plane k.
template <typename T>
inline void plane_uv(int k, const Vec3<T>& p, T& u, T& v) {
  switch (k) {
    case 0: u = p.x; v = p.y; break;  // XY
    case 1: u = p.y; v = p.z; break;  // YZ
    default: u = p.x; v = p.z; break; // XZ
  }
}

// Bilinear footprint of one plane query (clamped to the box).
template <typename T>
struct BilinearFootprint {
  int i0, j0;      // lower-left node
  T w00, w10, w01, w11;
};

template <typename T>
inline BilinearFootprint<T> bilinear_footprint(int res, T u, T v) {
  T gu = (clamp(u, T(-1), T(1)) + T(1)) * T(0.5) * T(res - 1);
  T gv = (clamp(v, T(-1), T(1)) + T(1)) * T(0.5) * T(res - 1);
  int i0 = std::min(int(gu), res - 2);
  int j0 = std::min(int(gv), res - 2);
  T fu = gu - T(i0);
  T fv = gv - T(j0);
  BilinearFootprint<T> fp;
  fp.i0 = i0;
  fp.j0 = j0;
  fp.w00 = (T(1) - fu) * (T(1) - fv);
  fp.w10 = fu * (T(1) - fv);
  fp.w01 = (T(1) - fu) * fv;
  fp.w11 = fu * fv;
  return fp;
}

// Concatenated feature [T_xy(p); T_yz(p); T_xz(p)] written to out[0..3C).
template <typename T>
inline void query_triplane(const Triplane<T>& tri, const Vec3<T>& p, T* out) {
  const int C = tri.channels;
  for (int k = 0; k < 3; ++k) {
    T u, v;
    plane_uv(k, p, u, v);
    auto fp = bilinear_footprint(tri.res, u, v);
    const T* n00 = tri.node(k, fp.i0, fp.j0);
    const T* n10 = tri.node(k, fp.i0 + 1, fp.j0);
    const T* n01 = tri.node(k, fp.i0, fp.j0 + 1);
    const T* n11 = tri.node(k, fp.i0 + 1, fp.j0 + 1);
    T* dst = out + k * C;
    for (int c = 0; c < C; ++c)
      dst[c] = fp.w00 * n00[c] + fp.w10 * n10[c] + fp.w01 * n01[c] + fp.w11 * n11[c];
  }
}

// Rows of `out` are the features of `pts`.
template <typename T>
inline void query_triplane_batch(const Triplane<T>& tri, const Vec3<T>* pts, int64_t n,
                                 MatX<T>& out) {
  out.resize(n, tri.feature_dim());
  for (int64_t i = 0; i < n; ++i) query_triplane(tri, pts[i], out.data() + i * tri.feature_dim());
}

// Scatters feature gradients back into plane gradients. `grad_planes` must
// have the same layout as the triplane.
template <typename T>
inline void query_triplane_backward(const Triplane<T>& tri, const Vec3<T>& p, const T* dfeat,
                                    std::array<std::vector<T>, 3>& grad_planes) {
  const int C = tri.channels;
  for (int k = 0; k < 3; ++k) {
    T u, v;
    plane_uv(k, p, u, v);
    auto fp = bilinear_footprint(tri.res, u, v);
    T* g = grad_planes[size_t(k)].data();
    const T* df = dfeat + k * C;
    auto add = [&](int i, int j, T w) {
      T* dst = g + (size_t(j) * tri.res + i) * C;
      for (int c = 0; c < C; ++c) dst[c] += w * df[c];
    };
    add(fp.i0, fp.j0, fp.w00);
    add(fp.i0 + 1, fp.j0, fp.w10);
    add(fp.i0, fp.j0 + 1, fp.w01);
    add(fp.i0 + 1, fp.j0 + 1, fp.w11);
  }
}

}  // namespace tpsdf

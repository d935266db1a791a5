#pragma once

// Differentiable triplane-field renderer. A patch render runs in two
// passes over fixed ray chunks:
//   pass 1  plan rays (detached coarse pass -> importance samples), then a
//           forward evaluation producing per-pixel buffers and the Eikonal
//           sums;
//   pass 2  re-evaluates each chunk with traces and runs reverse-mode
//           backward from per-pixel buffer gradients through compositing,
//           density conversion, both MLPs, the finite-difference
//           normal/Eikonal stencil, and bilinear plane interpolation.
// Sample positions are inputs (importance sampling is stop-gradient), so
// gradients are exact derivatives of the forward computation given the
// sampled points. Chunk boundaries depend only on ray indices and chunk
// results merge in chunk order, making gradients independent of the
// thread count.

#include <array>
#include <vector>

#include "tpsdf/composite.hpp"
#include "tpsdf/density.hpp"
#include "tpsdf/field.hpp"
#include "tpsdf/losses.hpp"
#include "tpsdf/render.hpp"

namespace tpsdf {

inline constexpr int kRayChunk = 64;

template <typename T>
struct FieldGrads {
  std::array<std::vector<T>, 3> planes;
  MlpGrads<T> sdf, rgb;

  void allocate(const TriplaneField<T>& f) {
    for (int k = 0; k < 3; ++k) planes[size_t(k)].assign(f.planes.plane[size_t(k)].size(), T(0));
    sdf.allocate(f.sdf_mlp);
    rgb.allocate(f.rgb_mlp);
  }

  void add(const FieldGrads& o) {
    for (int k = 0; k < 3; ++k)
      for (size_t i = 0; i < planes[size_t(k)].size(); ++i)
        planes[size_t(k)][i] += o.planes[size_t(k)][i];
    sdf.add(o.sdf);
    rgb.add(o.rgb);
  }

  void zero() {
    for (auto& p : planes) std::fill(p.begin(), p.end(), T(0));
    sdf.zero();
    rgb.zero();
  }

  // Views aligned with param_blocks() declaration order.
  std::vector<ParamBlock<T>> blocks(const TriplaneField<T>& f) {
    std::vector<ParamBlock<T>> out;
    const char* plane_names[3] = {"plane_xy", "plane_yz", "plane_xz"};
    for (int k = 0; k < 3; ++k)
      out.push_back({plane_names[k], planes[size_t(k)].data(), int64_t(planes[size_t(k)].size())});
    auto add_mlp = [&](MlpGrads<T>& g, const std::string& prefix) {
      for (size_t l = 0; l < g.dW.size(); ++l) {
        out.push_back({prefix + "_W" + std::to_string(l), g.dW[l].data(), g.dW[l].size()});
        out.push_back({prefix + "_b" + std::to_string(l), g.db[l].data(), g.db[l].size()});
      }
    };
    add_mlp(sdf, "sdf");
    add_mlp(rgb, "rgb");
    (void)f;
    return out;
  }
};

template <typename T>
struct ViewRender {
  PatchBuffers<T> buffers;
  RayPlan plan;
  T eik_sum = 0;          // sum over samples of (||grad s|| - 1)^2
  int64_t n_samples = 0;  // union sample count (Eikonal denominator share)
};

namespace detail {

// One chunk's field evaluation. Point layout: rows [0,n) are the sample
// centers, rows [v*n,(v+1)*n) for v=1..6 the +x,-x,+y,-y,+z,-z stencil.
template <typename T>
struct ChunkEval {
  int64_t n = 0;                 // sample count in chunk
  std::vector<Vec3<T>> points;   // 7n points
  MatX<T> feat;                  // 7n x 3C
  MlpTrace<T> sdf_trace;         // valid when traced
  MlpTrace<T> rgb_trace;
  MatX<T> sdf_out;               // 7n x (1+latent)
  MatX<T> rgb_in;                // n x (3C+latent+3)
  MatX<T> rgb_out;               // n x 3
  std::vector<T> gx, gy, gz, gnorm;  // finite-difference gradient per sample
  std::vector<T> nx, ny, nz;         // unit normal (guarded)
  std::vector<T> sigma;
};

template <typename T>
inline void eval_chunk(const TriplaneField<T>& field, const RayPlan& plan, int64_t r0, int64_t r1,
                       T beta, T fd_eps, bool traced, ChunkEval<T>& ev) {
  const int64_t s0 = plan.offset[size_t(r0)], s1 = plan.offset[size_t(r1)];
  const int64_t n = s1 - s0;
  ev.n = n;
  if (n == 0) return;

  ev.points.resize(size_t(7 * n));
  for (int64_t r = r0; r < r1; ++r) {
    const Ray& ray = plan.rays[size_t(r)];
    for (int64_t s = plan.offset[size_t(r)]; s < plan.offset[size_t(r) + 1]; ++s) {
      Vec3<double> p = ray.origin + ray.direction * plan.ts[size_t(s)];
      ev.points[size_t(s - s0)] = Vec3<T>{T(p.x), T(p.y), T(p.z)};
    }
  }
  for (int axis = 0; axis < 3; ++axis)
    for (int sign = 0; sign < 2; ++sign) {
      int v = 1 + 2 * axis + sign;
      T off = sign == 0 ? fd_eps : -fd_eps;
      for (int64_t i = 0; i < n; ++i) {
        Vec3<T> p = ev.points[size_t(i)];
        p[axis] += off;
        ev.points[size_t(v * n + i)] = p;
      }
    }

  query_triplane_batch(field.planes, ev.points.data(), 7 * n, ev.feat);
  ev.sdf_out = mlp_forward(field.sdf_mlp, ev.feat, traced ? &ev.sdf_trace : nullptr);

  ev.gx.resize(size_t(n));
  ev.gy.resize(size_t(n));
  ev.gz.resize(size_t(n));
  ev.gnorm.resize(size_t(n));
  ev.nx.resize(size_t(n));
  ev.ny.resize(size_t(n));
  ev.nz.resize(size_t(n));
  ev.sigma.resize(size_t(n));
  const T inv2e = T(1) / (2 * fd_eps);
  for (int64_t i = 0; i < n; ++i) {
    T gx = (ev.sdf_out(1 * n + i, 0) - ev.sdf_out(2 * n + i, 0)) * inv2e;
    T gy = (ev.sdf_out(3 * n + i, 0) - ev.sdf_out(4 * n + i, 0)) * inv2e;
    T gz = (ev.sdf_out(5 * n + i, 0) - ev.sdf_out(6 * n + i, 0)) * inv2e;
    ev.gx[size_t(i)] = gx;
    ev.gy[size_t(i)] = gy;
    ev.gz[size_t(i)] = gz;
    T gn = std::sqrt(gx * gx + gy * gy + gz * gz);
    ev.gnorm[size_t(i)] = gn;
    if (gn < T(1e-8)) {
      ev.nx[size_t(i)] = 0;
      ev.ny[size_t(i)] = 0;
      ev.nz[size_t(i)] = 1;
    } else {
      ev.nx[size_t(i)] = gx / gn;
      ev.ny[size_t(i)] = gy / gn;
      ev.nz[size_t(i)] = gz / gn;
    }
    ev.sigma[size_t(i)] = sdf_to_density(ev.sdf_out(i, 0), beta);
  }

  const int C3 = field.feature_dim();
  const int L = field.latent_dim;
  ev.rgb_in.resize(n, C3 + L + 3);
  ev.rgb_in.leftCols(C3) = ev.feat.topRows(n);
  ev.rgb_in.middleCols(C3, L) = ev.sdf_out.topRows(n).rightCols(L);
  for (int64_t i = 0; i < n; ++i) {
    ev.rgb_in(i, C3 + L) = ev.nx[size_t(i)];
    ev.rgb_in(i, C3 + L + 1) = ev.ny[size_t(i)];
    ev.rgb_in(i, C3 + L + 2) = ev.nz[size_t(i)];
  }
  ev.rgb_out = mlp_forward(field.rgb_mlp, ev.rgb_in, traced ? &ev.rgb_trace : nullptr);
}

}  // namespace detail

// Pass 1: plan + forward. `sample_rng` drives the per-pixel jitter streams.
template <typename T>
inline ViewRender<T> render_patch_field(const TriplaneField<T>& field, const CameraPose& cam,
                                        const PatchRect& rect, const SamplingConfig& cfg, T beta,
                                        const Rng& sample_rng, T fd_eps = 0) {
  if (fd_eps <= 0) fd_eps = field.default_eps();
  ViewRender<T> out;

  auto eval_sigma = [&](const Vec3<double>* pts, int64_t n, double* sig) {
    // Detached coarse pass: SDF head only, chunked over rows.
    parallel_chunks(n, 4096, [&](int64_t b, int64_t e, int64_t) {
      std::vector<Vec3<T>> p(size_t(e - b));
      for (int64_t i = b; i < e; ++i) p[size_t(i - b)] = Vec3<T>{T(pts[i].x), T(pts[i].y), T(pts[i].z)};
      VecX<T> s;
      eval_sdf_batch(field, p.data(), e - b, s);
      for (int64_t i = b; i < e; ++i) sig[i] = double(sdf_to_density(s(i - b), beta));
    });
  };
  out.plan = plan_rays(cam, rect, cfg, sample_rng, eval_sigma);
  out.buffers.allocate(rect.width, rect.height);
  out.n_samples = out.plan.total_samples();

  const int64_t n_chunks = (out.plan.n_rays + kRayChunk - 1) / kRayChunk;
  std::vector<T> chunk_eik(size_t(n_chunks), T(0));
  parallel_chunks(out.plan.n_rays, kRayChunk, [&](int64_t r0, int64_t r1, int64_t ci) {
    detail::ChunkEval<T> ev;
    detail::eval_chunk(field, out.plan, r0, r1, beta, fd_eps, false, ev);
    const int64_t s0 = out.plan.offset[size_t(r0)];
    T eik = 0;
    for (int64_t i = 0; i < ev.n; ++i) eik += sqr(ev.gnorm[size_t(i)] - T(1));
    chunk_eik[size_t(ci)] = eik;

    std::vector<T> ts, nrm;
    for (int64_t r = r0; r < r1; ++r) {
      if (!out.plan.hit[size_t(r)]) continue;
      int64_t b = out.plan.begin(int(r)), e = out.plan.end(int(r));
      int m = int(e - b);
      if (m == 0) continue;
      ts.resize(size_t(m));
      nrm.resize(size_t(m) * 3);
      for (int i = 0; i < m; ++i) {
        ts[size_t(i)] = T(out.plan.ts[size_t(b + i)]);
        nrm[size_t(3 * i)] = ev.nx[size_t(b - s0 + i)];
        nrm[size_t(3 * i + 1)] = ev.ny[size_t(b - s0 + i)];
        nrm[size_t(3 * i + 2)] = ev.nz[size_t(b - s0 + i)];
      }
      // rgb_out rows are contiguous 3-channel samples; sigma likewise.
      CompositeOut<T> co = composite(ts.data(), ev.sigma.data() + (b - s0),
                                     ev.rgb_out.data() + 3 * (b - s0), nrm.data(), m,
                                     T(out.plan.t_far[size_t(r)]));
      for (int a = 0; a < 3; ++a) {
        out.buffers.rgb[size_t(3 * r + a)] = co.color[a];
        out.buffers.normal[size_t(3 * r + a)] = co.normal[a];
      }
      out.buffers.depth_raw[size_t(r)] = co.depth_raw;
      out.buffers.wsum[size_t(r)] = co.wsum;
    }
  });
  for (T e : chunk_eik) out.eik_sum += e;
  return out;
}

// Pass 2: reverse mode. dbuffers holds d(loss)/d(buffer entries);
// eik_scale = d(loss)/d(eik_sum). Gradients accumulate into `grads`.
template <typename T>
inline void render_patch_field_backward(const TriplaneField<T>& field, const ViewRender<T>& fwd,
                                        T beta, const PatchBuffers<T>& dbuffers, T eik_scale,
                                        FieldGrads<T>& grads, T fd_eps = 0) {
  if (fd_eps <= 0) fd_eps = field.default_eps();
  const RayPlan& plan = fwd.plan;
  const int64_t n_chunks = (plan.n_rays + kRayChunk - 1) / kRayChunk;

  std::vector<FieldGrads<T>> partial(static_cast<size_t>(n_chunks));
  parallel_chunks(plan.n_rays, kRayChunk, [&](int64_t r0, int64_t r1, int64_t ci) {
    FieldGrads<T>& g = partial[size_t(ci)];
    g.allocate(field);
    detail::ChunkEval<T> ev;
    detail::eval_chunk(field, plan, r0, r1, beta, fd_eps, true, ev);
    if (ev.n == 0) return;
    const int64_t s0 = plan.offset[size_t(r0)];
    const int64_t n = ev.n;

    // Per-sample cotangents from compositing.
    std::vector<T> dsigma(size_t(n), T(0)), drgb(size_t(n) * 3, T(0)), dnrm(size_t(n) * 3, T(0));
    std::vector<T> ts, nrm;
    for (int64_t r = r0; r < r1; ++r) {
      if (!plan.hit[size_t(r)]) continue;
      int64_t b = plan.begin(int(r)), e = plan.end(int(r));
      int m = int(e - b);
      if (m == 0) continue;
      ts.resize(size_t(m));
      nrm.resize(size_t(m) * 3);
      for (int i = 0; i < m; ++i) {
        ts[size_t(i)] = T(plan.ts[size_t(b + i)]);
        nrm[size_t(3 * i)] = ev.nx[size_t(b - s0 + i)];
        nrm[size_t(3 * i + 1)] = ev.ny[size_t(b - s0 + i)];
        nrm[size_t(3 * i + 2)] = ev.nz[size_t(b - s0 + i)];
      }
      Vec3<T> dC{dbuffers.rgb[size_t(3 * r)], dbuffers.rgb[size_t(3 * r + 1)],
                 dbuffers.rgb[size_t(3 * r + 2)]};
      Vec3<T> dN{dbuffers.normal[size_t(3 * r)], dbuffers.normal[size_t(3 * r + 1)],
                 dbuffers.normal[size_t(3 * r + 2)]};
      composite_backward(ts.data(), ev.sigma.data() + (b - s0), ev.rgb_out.data() + 3 * (b - s0),
                         nrm.data(), m, T(plan.t_far[size_t(r)]), dC,
                         dbuffers.depth_raw[size_t(r)], dN, dbuffers.wsum[size_t(r)],
                         dsigma.data() + (b - s0), drgb.data() + 3 * (b - s0),
                         dnrm.data() + 3 * (b - s0));
    }

    // RGB MLP backward; its input gradient splits into plane features,
    // latent, and the per-sample normal.
    MatX<T> dRgbOut(n, 3);
    for (int64_t i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a) dRgbOut(i, a) = drgb[size_t(3 * i + a)];
    MatX<T> dRgbIn;
    mlp_backward(field.rgb_mlp, ev.rgb_trace, dRgbOut, g.rgb, &dRgbIn);

    const int C3 = field.feature_dim();
    const int L = field.latent_dim;

    // Normal cotangent: compositing + RGB-MLP input, then through the
    // normalization onto the finite-difference gradient.
    MatX<T> dSdfOut = MatX<T>::Zero(7 * n, 1 + L);
    const T inv2e = T(1) / (2 * fd_eps);
    for (int64_t i = 0; i < n; ++i) {
      Vec3<T> dn{dnrm[size_t(3 * i)] + dRgbIn(i, C3 + L),
                 dnrm[size_t(3 * i + 1)] + dRgbIn(i, C3 + L + 1),
                 dnrm[size_t(3 * i + 2)] + dRgbIn(i, C3 + L + 2)};
      T gn = ev.gnorm[size_t(i)];
      Vec3<T> gvec{ev.gx[size_t(i)], ev.gy[size_t(i)], ev.gz[size_t(i)]};
      Vec3<T> dg{0, 0, 0};
      if (gn >= T(1e-8)) {
        Vec3<T> nh = gvec / gn;
        dg = (dn - nh * dot(nh, dn)) / gn;
        // Eikonal: d/dg of (gn-1)^2 = 2(gn-1) g/gn.
        dg += gvec * (T(2) * eik_scale * (gn - T(1)) / gn);
      }
      // Density path on the center sdf.
      dSdfOut(i, 0) = dsigma[size_t(i)] * sdf_to_density_deriv(ev.sdf_out(i, 0), beta);
      // Latent path.
      for (int l = 0; l < L; ++l) dSdfOut(i, 1 + l) = dRgbIn(i, C3 + l);
      // Stencil sdf cotangents: d g_a = (s+ - s-) / (2 eps).
      dSdfOut(1 * n + i, 0) = dg.x * inv2e;
      dSdfOut(2 * n + i, 0) = -dg.x * inv2e;
      dSdfOut(3 * n + i, 0) = dg.y * inv2e;
      dSdfOut(4 * n + i, 0) = -dg.y * inv2e;
      dSdfOut(5 * n + i, 0) = dg.z * inv2e;
      dSdfOut(6 * n + i, 0) = -dg.z * inv2e;
    }

    MatX<T> dFeat;
    mlp_backward(field.sdf_mlp, ev.sdf_trace, dSdfOut, g.sdf, &dFeat);
    // The RGB MLP also consumes the center features directly.
    dFeat.topRows(n).leftCols(C3) += dRgbIn.leftCols(C3);

    for (int64_t row = 0; row < 7 * n; ++row)
      query_triplane_backward(field.planes, ev.points[size_t(row)], dFeat.data() + row * C3,
                              g.planes);
  });

  for (auto& p : partial)
    if (!p.planes[0].empty()) grads.add(p);
}

}  // namespace tpsdf

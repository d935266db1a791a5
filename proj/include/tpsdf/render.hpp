#pragma once

// Shared ray-marching plan (coarse pass -> importance sampling -> merged
// sample list) and the analytic-SDF volume renderer used as the oracle
// path. The learned-field renderer lives in diffrender.hpp and consumes
// the same plan, so both paths sample and composite identically.

#include <functional>
#include <vector>

#include "tpsdf/analytic.hpp"
#include "tpsdf/camera.hpp"
#include "tpsdf/composite.hpp"
#include "tpsdf/density.hpp"
#include "tpsdf/image.hpp"
#include "tpsdf/parallel.hpp"
#include "tpsdf/sampling.hpp"

namespace tpsdf {

// A rectangle of pixels within a camera image.
struct PatchRect {
  int x0 = 0, y0 = 0, width = 0, height = 0;
};

struct RayPlan {
  int n_rays = 0;
  std::vector<Ray> rays;
  std::vector<uint8_t> hit;          // box intersection flag per ray
  std::vector<double> t_near, t_far;
  std::vector<int64_t> offset;       // n_rays+1 prefix into ts
  std::vector<double> ts;            // merged per-ray sample positions
  int64_t total_samples() const { return offset.empty() ? 0 : offset.back(); }

  int64_t begin(int r) const { return offset[size_t(r)]; }
  int64_t end(int r) const { return offset[size_t(r) + 1]; }
};

// eval_sigma(points, n, sigma_out) evaluates densities for the detached
// coarse pass. The per-pixel RNG streams derive from `base` and the pixel
// index, so plans are schedule-independent.
template <typename SigmaFn>
inline RayPlan plan_rays(const CameraPose& cam, const PatchRect& rect, const SamplingConfig& cfg,
                         const Rng& base, SigmaFn&& eval_sigma) {
  cfg.validate();
  if (rect.x0 < 0 || rect.y0 < 0 || rect.x0 + rect.width > cam.width ||
      rect.y0 + rect.height > cam.height)
    throw std::invalid_argument("patch rectangle outside image");

  RayPlan plan;
  plan.n_rays = rect.width * rect.height;
  plan.rays.resize(size_t(plan.n_rays));
  plan.hit.assign(size_t(plan.n_rays), 0);
  plan.t_near.assign(size_t(plan.n_rays), 0);
  plan.t_far.assign(size_t(plan.n_rays), 0);

  // Coarse grid, fixed count per hitting ray.
  const int nc = cfg.n_coarse;
  std::vector<Vec3<double>> coarse_pts(size_t(plan.n_rays) * nc);
  std::vector<std::vector<double>> coarse_ts(size_t(plan.n_rays));
  parallel_for(plan.n_rays, [&](int64_t r) {
    int px = rect.x0 + int(r) % rect.width;
    int py = rect.y0 + int(r) / rect.width;
    Ray ray = generate_ray(cam, px + 0.5, py + 0.5);
    plan.rays[size_t(r)] = ray;
    double tn, tf;
    if (!ray_aabb(ray, tn, tf)) return;
    plan.hit[size_t(r)] = 1;
    plan.t_near[size_t(r)] = tn;
    plan.t_far[size_t(r)] = tf;
    Rng rng = base.stream("coarse", r);
    sample_coarse(tn, tf, nc, cfg.jitter, rng, coarse_ts[size_t(r)]);
    for (int k = 0; k < nc; ++k)
      coarse_pts[size_t(r) * nc + k] = ray.origin + ray.direction * coarse_ts[size_t(r)][size_t(k)];
  });

  std::vector<double> sigma(size_t(plan.n_rays) * nc, 0.0);
  eval_sigma(coarse_pts.data(), int64_t(coarse_pts.size()), sigma.data());

  // Coarse weights -> fine samples -> merged list.
  std::vector<std::vector<double>> merged(size_t(plan.n_rays));
  parallel_for(plan.n_rays, [&](int64_t r) {
    if (!plan.hit[size_t(r)]) return;
    const auto& cts = coarse_ts[size_t(r)];
    double tf = plan.t_far[size_t(r)];
    std::vector<double> w(static_cast<size_t>(nc));
    double trans = 1;
    for (int i = 0; i < nc; ++i) {
      double delta = (i + 1 < nc ? cts[size_t(i) + 1] - cts[size_t(i)] : tf - cts[size_t(i)]);
      double alpha = -std::expm1(-sigma[size_t(r) * nc + i] * delta);
      w[size_t(i)] = alpha * trans;
      trans *= (1 - alpha);
    }
    std::vector<double> fine;
    Rng rng = base.stream("fine", r);
    sample_fine(plan.t_near[size_t(r)], tf, w, cfg.n_fine, cfg.jitter, rng, fine);
    merge_samples(cts, fine, merged[size_t(r)]);
  });

  plan.offset.assign(size_t(plan.n_rays) + 1, 0);
  for (int r = 0; r < plan.n_rays; ++r)
    plan.offset[size_t(r) + 1] = plan.offset[size_t(r)] + int64_t(merged[size_t(r)].size());
  plan.ts.resize(size_t(plan.total_samples()));
  for (int r = 0; r < plan.n_rays; ++r)
    std::copy(merged[size_t(r)].begin(), merged[size_t(r)].end(),
              plan.ts.begin() + plan.offset[size_t(r)]);
  return plan;
}

// Per-pixel outputs of a patch render, kept in the compute scalar type so
// losses can run on them directly.
template <typename T>
struct PatchBuffers {
  int width = 0, height = 0;
  std::vector<T> rgb;        // 3 per pixel
  std::vector<T> depth_raw;  // weight-normalized, unmasked
  std::vector<T> normal;     // 3 per pixel, zero when degenerate
  std::vector<T> wsum;

  void allocate(int w, int h) {
    width = w;
    height = h;
    rgb.assign(size_t(w) * h * 3, T(1));
    depth_raw.assign(size_t(w) * h, T(0));
    normal.assign(size_t(w) * h * 3, T(0));
    wsum.assign(size_t(w) * h, T(0));
  }
};

// Exported buffers per the dataset conventions: depth masked to 0 where
// wsum < 0.5 (background), normals already zero when degenerate.
struct RenderBuffers {
  ImageF rgb, depth, normal, wsum;
};

template <typename T>
inline RenderBuffers to_render_buffers(const PatchBuffers<T>& pb) {
  RenderBuffers rb;
  rb.rgb = ImageF(pb.width, pb.height, 3);
  rb.depth = ImageF(pb.width, pb.height, 1);
  rb.normal = ImageF(pb.width, pb.height, 3);
  rb.wsum = ImageF(pb.width, pb.height, 1);
  for (size_t p = 0; p < pb.wsum.size(); ++p) {
    for (int c = 0; c < 3; ++c) {
      rb.rgb.data[3 * p + c] = float(clamp(pb.rgb[3 * p + c], T(0), T(1)));
      rb.normal.data[3 * p + c] = float(pb.normal[3 * p + c]);
    }
    bool bg = pb.wsum[p] < T(kWsumBackgroundCutoff);
    rb.depth.data[p] = bg ? 0.f : float(pb.depth_raw[p]);
    rb.wsum.data[p] = float(pb.wsum[p]);
  }
  return rb;
}

// Volume render of an analytic scene: the exact SDF is wired straight into
// the density conversion, shading colors and SDF normals at every sample.
inline PatchBuffers<double> render_patch_analytic(const AnalyticScene& scene,
                                                  const CameraPose& cam, const PatchRect& rect,
                                                  const SamplingConfig& cfg,
                                                  const DensityParams& dp, const Rng& base) {
  dp.validate();
  auto eval_sigma = [&](const Vec3<double>* pts, int64_t n, double* out) {
    parallel_for(n, [&](int64_t i) {
      out[i] = sdf_to_density(sdf_eval(scene, pts[i]), dp.beta);
    });
  };
  RayPlan plan = plan_rays(cam, rect, cfg, base, eval_sigma);

  PatchBuffers<double> pb;
  pb.allocate(rect.width, rect.height);
  parallel_for(plan.n_rays, [&](int64_t r) {
    if (!plan.hit[size_t(r)]) return;
    int64_t b = plan.begin(int(r)), e = plan.end(int(r));
    int m = int(e - b);
    if (m == 0) return;
    std::vector<double> ts(plan.ts.begin() + b, plan.ts.begin() + e);
    std::vector<double> sig(static_cast<size_t>(m)), rgb(size_t(m) * 3), nrm(size_t(m) * 3);
    const Ray& ray = plan.rays[size_t(r)];
    for (int i = 0; i < m; ++i) {
      Vec3<double> p = ray.origin + ray.direction * ts[size_t(i)];
      sig[size_t(i)] = sdf_to_density(sdf_eval(scene, p), dp.beta);
      Vec3<double> n = scene_normal(scene, p);
      Vec3<double> c = shade(nearest_primitive(scene, p).albedo, n, scene.light_direction);
      for (int a = 0; a < 3; ++a) {
        rgb[size_t(3 * i + a)] = c[a];
        nrm[size_t(3 * i + a)] = n[a];
      }
    }
    CompositeOut<double> co =
        composite(ts.data(), sig.data(), rgb.data(), nrm.data(), m, plan.t_far[size_t(r)]);
    for (int a = 0; a < 3; ++a) {
      pb.rgb[size_t(3 * r + a)] = co.color[a];
      pb.normal[size_t(3 * r + a)] = co.normal[a];
    }
    pb.depth_raw[size_t(r)] = co.depth_raw;
    pb.wsum[size_t(r)] = co.wsum;
  });
  return pb;
}

}  // namespace tpsdf

#pragma once

// Per-scene fitting: V supervised patch renders per step (the designated
// input view plus V-1 random side views), reverse-mode gradients, Adam,
// cosine learning rate and geometric beta annealing. Also the full-pipeline
// gradient checker the acceptance suite runs.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tpsdf/analytic.hpp"
#include "tpsdf/checkpoint.hpp"
#include "tpsdf/diffrender.hpp"
#include "tpsdf/losses.hpp"

namespace tpsdf {

// --- Adam -------------------------------------------------------------------

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  int64_t step = 0;

  template <typename Blocks>
  void allocate(const Blocks& blocks) {
    m.clear();
    v.clear();
    for (const auto& b : blocks) {
      m.emplace_back(size_t(b.size), T(0));
      v.emplace_back(size_t(b.size), T(0));
    }
    step = 0;
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

template <typename T>
inline void adam_step(std::vector<ParamBlock<T>>& params, const std::vector<ParamBlock<T>>& grads,
                      AdamState<T>& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: block count mismatch");
  state.step += 1;
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  const T corr1 = T(1) - std::pow(b1, T(state.step));
  const T corr2 = T(1) - std::pow(b2, T(state.step));
  const T lr = T(cfg.lr), eps = T(cfg.eps);
  for (size_t k = 0; k < params.size(); ++k) {
    if (params[k].size != grads[k].size)
      throw std::invalid_argument("adam_step: block size mismatch at " + params[k].name);
    T* p = params[k].data;
    const T* g = grads[k].data;
    T* m = state.m[k].data();
    T* v = state.v[k].data();
    parallel_chunks(params[k].size, 16384, [&](int64_t b, int64_t e, int64_t) {
      for (int64_t i = b; i < e; ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        T mh = m[i] / corr1;
        T vh = v[i] / corr2;
        p[i] -= lr * mh / (std::sqrt(vh) + eps);
      }
    });
  }
}

// --- supervision patches ------------------------------------------------------

template <typename T>
struct GtPatch {
  int width = 0, height = 0;
  std::vector<T> rgb, depth, normal;
  std::vector<uint8_t> mask;
  bool has_depth = true, has_normal = true;
};

template <typename T>
inline GtPatch<T> extract_patch(const ViewBundle& view, const PatchRect& rect) {
  GtPatch<T> g;
  g.width = rect.width;
  g.height = rect.height;
  g.has_depth = view.has_depth;
  g.has_normal = view.has_normal;
  g.rgb.resize(size_t(rect.width) * rect.height * 3);
  g.depth.assign(size_t(rect.width) * rect.height, T(0));
  g.normal.assign(size_t(rect.width) * rect.height * 3, T(0));
  g.mask.assign(size_t(rect.width) * rect.height, 0);
  for (int y = 0; y < rect.height; ++y)
    for (int x = 0; x < rect.width; ++x) {
      size_t p = size_t(y) * rect.width + x;
      int sx = rect.x0 + x, sy = rect.y0 + y;
      for (int c = 0; c < 3; ++c) g.rgb[3 * p + c] = T(view.rgb.at(sx, sy, c));
      if (!view.mask.empty()) g.mask[p] = view.mask.at(sx, sy, 0) ? 1 : 0;
      if (view.has_depth && !view.depth.empty()) g.depth[p] = T(view.depth.at(sx, sy, 0));
      if (view.has_normal && !view.normal.empty())
        for (int c = 0; c < 3; ++c) g.normal[3 * p + c] = T(view.normal.at(sx, sy, c));
    }
  return g;
}

// Per-view loss terms and the buffer cotangents for a given total-loss
// scale (1/V and the lambda weights are applied here).
template <typename T>
struct ViewLossResult {
  T rgb = 0, normal = 0, depth = 0;
  int64_t depth_excluded = 0;
};

template <typename T>
inline ViewLossResult<T> view_losses(const PatchBuffers<T>& pb, const GtPatch<T>& gt,
                                     const LossWeights& w, T inv_V, PatchBuffers<T>* dbuf) {
  ViewLossResult<T> out;
  const int64_t np = int64_t(pb.width) * pb.height;
  out.rgb = loss_rgb(pb.rgb.data(), gt.rgb.data(), np * 3);
  if (dbuf) loss_rgb_backward(pb.rgb.data(), gt.rgb.data(), np * 3, inv_V, dbuf->rgb.data());
  if (gt.has_normal) {
    out.normal = loss_normal(pb.normal.data(), gt.normal.data(), gt.mask.data(), np);
    if (dbuf)
      loss_normal_backward(pb.normal.data(), gt.normal.data(), gt.mask.data(), np,
                           T(w.lambda_n) * inv_V, dbuf->normal.data());
  }
  if (gt.has_depth) {
    out.depth = loss_depth_si(pb.depth_raw.data(), gt.depth.data(), gt.mask.data(), np,
                              T(w.lambda_si), &out.depth_excluded);
    if (dbuf)
      loss_depth_si_backward(pb.depth_raw.data(), gt.depth.data(), gt.mask.data(), np,
                             T(w.lambda_si), T(w.lambda_d) * inv_V, dbuf->depth_raw.data());
  }
  return out;
}

// --- fit ---------------------------------------------------------------------

struct FitConfig {
  int64_t iterations = 2000;
  double lr = 1e-3;  // desk-scale default; the reference rate 2e-5 via --paper-lr
  bool cosine = true;
  int patch = 64;
  int views_per_step = 4;  // V
  int input_view = 0;
  uint64_t seed = 0;
  double beta0 = 0.1, beta_end = 0.002;
  double fd_eps = 0;  // 0 -> half plane cell
  SamplingConfig sampling;

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("fit: iterations must be >= 1");
    if (views_per_step < 1) throw std::invalid_argument("fit: V must be >= 1");
    if (patch < 1) throw std::invalid_argument("fit: patch must be >= 1");
    sampling.validate();
    if (!(beta0 > 0) || !(beta_end > 0) || beta_end > beta0)
      throw std::invalid_argument("fit: need beta0 >= beta_end > 0");
  }
};

struct FitHistoryRow {
  int64_t iteration;
  double total, rgb, normal, depth, eikonal;
  double beta, lr;
};

class NanAbort : public std::runtime_error {
 public:
  NanAbort(int64_t iter, std::string diag)
      : std::runtime_error("non-finite loss at iteration " + std::to_string(iter) +
                           (diag.empty() ? "" : " (diagnostic checkpoint: " + diag + ")")),
        iteration(iter),
        diagnostic_path(std::move(diag)) {}
  int64_t iteration;
  std::string diagnostic_path;
};

// One optimization step over the given views; returns the loss breakdown.
// Exposed separately so the gradient checker and fit share the exact path.
template <typename T>
inline LossBreakdown<T> fit_step(TriplaneField<T>& field, const std::vector<ViewBundle>& views,
                                 const std::vector<int>& view_ids,
                                 const std::vector<PatchRect>& rects, const FitConfig& cfg,
                                 const LossWeights& weights, T beta, int64_t iter,
                                 FieldGrads<T>* grads_out) {
  const size_t V = view_ids.size();
  const T inv_V = T(1) / T(V);
  T fd_eps = cfg.fd_eps > 0 ? T(cfg.fd_eps) : field.default_eps();

  std::vector<ViewRender<T>> renders(V);
  std::vector<GtPatch<T>> gts(V);
  std::vector<T> rgb_terms(V), normal_terms(V), depth_terms(V);
  int64_t n_total = 0;
  T eik_sum = 0;
  for (size_t v = 0; v < V; ++v) {
    const ViewBundle& vb = views[size_t(view_ids[v])];
    Rng stream = Rng(cfg.seed).stream("sampling", iter, int(v));
    renders[v] = render_patch_field(field, vb.camera, rects[v], cfg.sampling, beta, stream, fd_eps);
    gts[v] = extract_patch<T>(vb, rects[v]);
    n_total += renders[v].n_samples;
    eik_sum += renders[v].eik_sum;
  }
  T eik_mean = n_total > 0 ? eik_sum / T(n_total) : T(0);

  std::vector<PatchBuffers<T>> dbufs(V);
  for (size_t v = 0; v < V; ++v) {
    if (grads_out) {
      dbufs[v].allocate(rects[v].width, rects[v].height);
      // allocate() paints the white background; cotangents start at zero.
      std::fill(dbufs[v].rgb.begin(), dbufs[v].rgb.end(), T(0));
    }
    auto vl = view_losses(renders[v].buffers, gts[v], weights, inv_V,
                          grads_out ? &dbufs[v] : nullptr);
    rgb_terms[v] = vl.rgb;
    normal_terms[v] = vl.normal;
    depth_terms[v] = vl.depth;
  }
  LossBreakdown<T> loss = total_loss(rgb_terms, normal_terms, depth_terms, eik_mean, weights);

  if (grads_out) {
    T eik_scale = n_total > 0 ? T(weights.lambda_eik) / T(n_total) : T(0);
    for (size_t v = 0; v < V; ++v)
      render_patch_field_backward(field, renders[v], beta, dbufs[v], eik_scale, *grads_out,
                                  fd_eps);
  }
  return loss;
}

template <typename T>
inline std::vector<FitHistoryRow> fit(TriplaneField<T>& field, const std::vector<ViewBundle>& views,
                                      const FitConfig& cfg, const LossWeights& weights,
                                      const std::string& diagnostic_path = "",
                                      const std::function<void(int64_t)>& progress = {}) {
  cfg.validate();
  weights.require_runnable();
  if (views.empty()) throw std::invalid_argument("fit needs at least one view");
  if (cfg.input_view < 0 || cfg.input_view >= int(views.size()))
    throw std::invalid_argument("fit: input view out of range");
  for (const auto& v : views)
    if (cfg.patch > v.camera.width || cfg.patch > v.camera.height)
      throw std::invalid_argument("fit: patch exceeds image size");

  std::vector<FitHistoryRow> history;
  history.reserve(size_t(cfg.iterations));

  FieldGrads<T> grads;
  grads.allocate(field);
  auto params = param_blocks(field);
  AdamState<T> adam;
  adam.allocate(params);
  AdamConfig acfg;

  Rng root(cfg.seed);
  const int V = std::min<int>(cfg.views_per_step, int(views.size()));

  for (int64_t iter = 0; iter < cfg.iterations; ++iter) {
    T beta = T(beta_schedule(iter, cfg.iterations, cfg.beta0, cfg.beta_end));
    acfg.lr = cfg.cosine ? cfg.lr * 0.5 * (1.0 + std::cos(kPi * double(iter) / double(cfg.iterations)))
                         : cfg.lr;

    // The designated input view plus V-1 distinct random side views.
    std::vector<int> ids{cfg.input_view};
    {
      Rng sel = root.stream("viewsel", iter);
      std::vector<int> others;
      for (int i = 0; i < int(views.size()); ++i)
        if (i != cfg.input_view) others.push_back(i);
      for (int pick = 0; pick < V - 1 && !others.empty(); ++pick) {
        size_t j = size_t(sel.uniform_index(others.size()));
        ids.push_back(others[j]);
        others.erase(others.begin() + int64_t(j));
      }
    }

    std::vector<PatchRect> rects;
    for (size_t v = 0; v < ids.size(); ++v) {
      Rng prng = root.stream("patch", iter, int(v));
      const CameraPose& cam = views[size_t(ids[v])].camera;
      int max_x = cam.width - cfg.patch, max_y = cam.height - cfg.patch;
      PatchRect r{max_x > 0 ? int(prng.uniform_index(uint64_t(max_x + 1))) : 0,
                  max_y > 0 ? int(prng.uniform_index(uint64_t(max_y + 1))) : 0, cfg.patch,
                  cfg.patch};
      rects.push_back(r);
    }

    grads.zero();
    LossBreakdown<T> loss = fit_step(field, views, ids, rects, cfg, weights, beta, iter, &grads);
    if (!loss.finite()) {
      if (!diagnostic_path.empty()) {
        field.iteration = iter;
        save_checkpoint(diagnostic_path, field);
      }
      throw NanAbort(iter, diagnostic_path);
    }

    auto grad_blocks = grads.blocks(field);
    adam_step(params, grad_blocks, adam, acfg);
    field.iteration = iter + 1;

    history.push_back({iter, double(loss.total), double(loss.rgb), double(loss.normal),
                       double(loss.depth), double(loss.eikonal), double(beta), acfg.lr});
    if (progress) progress(iter);
  }
  return history;
}

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<FitHistoryRow>& history) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "iteration,total,rgb,normal,depth,eikonal,beta,lr\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.iteration), r.total, r.rgb, r.normal, r.depth,
                  r.eikonal, r.beta, r.lr);
    f << buf;
  }
}

// --- gradient check -----------------------------------------------------------

struct GradCheckBlockReport {
  std::string name;
  double max_rel_err = 0;
  int64_t worst_index = -1;
};

struct GradCheckReport {
  double max_rel_err = 0;
  std::string worst_block;
  int64_t worst_index = -1;
  double fd_eps = 0;
  std::vector<GradCheckBlockReport> blocks;
};

// Central-difference check of the full render->loss pipeline on a tiny
// instance. Runs in double precision; jitter off and no fine samples so
// the sampling pattern is parameter-independent.
inline GradCheckReport gradcheck_full_pipeline(uint64_t seed, double fd_h = 1e-5) {
  using T = double;
  AnalyticScene scene;
  scene.primitives.push_back({SpherePrim{{0, 0, 0}, 0.5}, {0.8, 0.4, 0.3}});
  CameraPose cam = look_at_camera({0, 0, 2.3}, {0, 0, 0}, 4.0, 4.0, 2, 2);
  ViewBundle gt = render_ground_truth(scene, cam);

  FieldDims dims;
  dims.plane_res = 8;
  dims.plane_channels = 4;
  dims.latent_dim = 3;
  dims.sdf_hidden = {12};
  dims.rgb_hidden = {10};
  TriplaneField<T> field = init_field<T>(seed, dims);

  FitConfig cfg;
  cfg.iterations = 1;
  cfg.patch = 2;
  cfg.views_per_step = 1;
  cfg.seed = seed;
  cfg.sampling = {4, 0, false};
  LossWeights weights;  // runnable defaults

  std::vector<ViewBundle> views{gt};
  std::vector<int> ids{0};
  std::vector<PatchRect> rects{{0, 0, 2, 2}};
  const T beta = T(0.05);

  FieldGrads<T> grads;
  grads.allocate(field);
  fit_step(field, views, ids, rects, cfg, weights, beta, 0, &grads);

  auto loss_value = [&]() {
    return double(fit_step<T>(field, views, ids, rects, cfg, weights, beta, 0, nullptr).total);
  };

  GradCheckReport report;
  report.fd_eps = fd_h;
  auto params = param_blocks(field);
  auto gblocks = grads.blocks(field);
  for (size_t k = 0; k < params.size(); ++k) {
    GradCheckBlockReport br;
    br.name = params[k].name;
    for (int64_t i = 0; i < params[k].size; ++i) {
      T keep = params[k].data[i];
      T h = fd_h * std::max(1.0, std::abs(keep));
      params[k].data[i] = keep + h;
      double hi = loss_value();
      params[k].data[i] = keep - h;
      double lo = loss_value();
      params[k].data[i] = keep;
      double numeric = (hi - lo) / (2 * h);
      double analytic = gblocks[k].data[i];
      double rel = std::abs(analytic - numeric) /
                   std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      if (rel > br.max_rel_err) {
        br.max_rel_err = rel;
        br.worst_index = i;
      }
    }
    if (br.max_rel_err > report.max_rel_err) {
      report.max_rel_err = br.max_rel_err;
      report.worst_block = br.name;
      report.worst_index = br.worst_index;
    }
    report.blocks.push_back(br);
  }
  return report;
}

}  // namespace tpsdf

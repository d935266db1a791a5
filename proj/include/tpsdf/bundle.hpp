#pragma once

// The Stage-II interface: conditioning bundles of coarse renders
// (RGB / depth / weights-sum per novel view) serialized to disk, the
// stub/oracle enhancers standing in for a generative back-end, and the
// multi-view refit driver.
//
// Bundle layout (docs/bundle-format.md):
//   bundle/manifest.json
//   bundle/view_{k:03}/rgb.png | depth.pfm | wsum.pfm | camera.json

#include <filesystem>
#include <string>
#include <vector>

#include "tpsdf/dataset.hpp"
#include "tpsdf/diffrender.hpp"
#include "tpsdf/training.hpp"

namespace tpsdf {

inline constexpr int kBundleManifestVersion = 1;

struct BundleView {
  int view_id = 0;
  CameraPose camera;
  ImageF rgb;    // HxWx3
  ImageF depth;  // HxWx1, weight-normalized, 0 where wsum < 0.5
  ImageF wsum;   // HxWx1, raw accumulated weights
};

struct ConditioningBundle {
  std::vector<BundleView> views;
  json manifest;
  std::filesystem::path dir;
};

enum class EnhancerKind { stub, oracle, external };

inline const char* provenance_name(EnhancerKind k) {
  switch (k) {
    case EnhancerKind::stub: return "stub";
    case EnhancerKind::oracle: return "oracle";
    default: return "external";
  }
}

struct EnhancedView {
  int view_id = 0;
  CameraPose camera;
  ImageF rgb;
};

struct EnhancedViewSet {
  std::vector<EnhancedView> views;
  EnhancerKind provenance = EnhancerKind::stub;
  // Per-view PSNR of enhanced vs coarse RGB; measures how far Stage I was
  // from the enhancer's target (infinite for the identity stub).
  std::vector<double> psnr_vs_coarse;
};

inline std::string view_dir_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%03d", k);
  return buf;
}

// Full-frame inference render of a field view (forward pass only).
template <typename T>
inline RenderBuffers render_view_field(const TriplaneField<T>& field, const CameraPose& cam,
                                       const SamplingConfig& cfg, T beta, const Rng& rng) {
  ViewRender<T> r = render_patch_field(field, cam, PatchRect{0, 0, cam.width, cam.height}, cfg,
                                       beta, rng);
  return to_render_buffers(r.buffers);
}

template <typename T>
inline ConditioningBundle export_bundle(const TriplaneField<T>& field,
                                        const std::vector<CameraPose>& cameras,
                                        const SamplingConfig& cfg, T beta,
                                        const std::string& scene_id,
                                        const std::string& checkpoint_hash,
                                        const std::filesystem::path& dir, uint64_t seed) {
  namespace fs = std::filesystem;
  if (cameras.empty()) throw std::invalid_argument("export_bundle: need at least one camera");
  fs::create_directories(dir);

  ConditioningBundle bundle;
  bundle.dir = dir;
  json views_meta = json::array();
  for (size_t k = 0; k < cameras.size(); ++k) {
    BundleView bv;
    bv.view_id = int(k);
    bv.camera = cameras[k];
    Rng stream = Rng(seed).stream("bundle", int(k));
    RenderBuffers rb = render_view_field(field, cameras[k], cfg, beta, stream);
    bv.rgb = rb.rgb;
    bv.depth = rb.depth;
    bv.wsum = rb.wsum;

    fs::path vdir = dir / view_dir_name(int(k));
    fs::create_directories(vdir);
    write_png(vdir / "rgb.png", quantize_unit(bv.rgb));
    write_pfm(vdir / "depth.pfm", bv.depth);
    write_pfm(vdir / "wsum.pfm", bv.wsum);
    save_json_file(vdir / "camera.json", camera_to_json(cameras[k]));
    views_meta.push_back({{"view_id", int(k)}, {"dir", view_dir_name(int(k))}});
    bundle.views.push_back(std::move(bv));
  }

  json manifest;
  manifest["version"] = kBundleManifestVersion;
  manifest["scene_id"] = scene_id;
  manifest["checkpoint_hash"] = checkpoint_hash;
  manifest["render_config"] = {{"n_coarse", cfg.n_coarse},
                               {"n_fine", cfg.n_fine},
                               {"jitter", cfg.jitter},
                               {"beta", double(beta)},
                               {"width", cameras[0].width},
                               {"height", cameras[0].height}};
  manifest["created"] = []() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return std::string(buf);
  }();
  manifest["views"] = views_meta;
  save_json_file(dir / "manifest.json", manifest);
  bundle.manifest = manifest;
  return bundle;
}

inline ConditioningBundle import_bundle(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  ConditioningBundle bundle;
  bundle.dir = dir;
  if (!fs::exists(dir / "manifest.json"))
    throw std::runtime_error("bundle manifest missing: " + (dir / "manifest.json").string());
  bundle.manifest = load_json_file(dir / "manifest.json");
  require_keys(bundle.manifest, "bundle manifest",
               {"version", "scene_id", "checkpoint_hash", "render_config", "created", "views"},
               {"version", "views"});
  int version = bundle.manifest["version"].get<int>();
  if (version != kBundleManifestVersion)
    throw std::runtime_error("unknown bundle manifest version " + std::to_string(version));

  std::set<int> seen;
  int width = -1, height = -1;
  for (const auto& vm : bundle.manifest["views"]) {
    require_keys(vm, "bundle view entry", {"view_id", "dir"}, {"view_id", "dir"});
    BundleView bv;
    bv.view_id = vm["view_id"].get<int>();
    if (!seen.insert(bv.view_id).second)
      throw std::runtime_error("bundle manifest lists view " + std::to_string(bv.view_id) +
                               " more than once");
    fs::path vdir = dir / vm["dir"].get<std::string>();
    for (const char* f : {"rgb.png", "depth.pfm", "wsum.pfm", "camera.json"})
      if (!fs::exists(vdir / f))
        throw std::runtime_error("incomplete view " + view_dir_name(bv.view_id) + ": missing " +
                                 f);
    bv.camera = camera_from_json(load_json_file(vdir / "camera.json"));
    bv.rgb = to_unit_float(read_png(vdir / "rgb.png"));
    bv.depth = read_pfm(vdir / "depth.pfm");
    bv.wsum = read_pfm(vdir / "wsum.pfm");
    if (width < 0) {
      width = bv.rgb.width;
      height = bv.rgb.height;
    }
    if (bv.rgb.width != width || bv.rgb.height != height || bv.depth.width != width ||
        bv.wsum.width != width)
      throw std::runtime_error("bundle view " + view_dir_name(bv.view_id) +
                               ": resolution mismatch");
    bundle.views.push_back(std::move(bv));
  }
  return bundle;
}

// Identity enhancer: passes the coarse RGB through untouched.
inline EnhancedViewSet enhance_stub(const ConditioningBundle& bundle) {
  EnhancedViewSet out;
  out.provenance = EnhancerKind::stub;
  for (const auto& bv : bundle.views) {
    out.views.push_back({bv.view_id, bv.camera, bv.rgb});
    out.psnr_vs_coarse.push_back(std::numeric_limits<double>::infinity());
  }
  return out;
}

// Oracle enhancer: replaces each view with the analytic ground-truth
// render, simulating a perfect generative model on synthetic scenes.
inline EnhancedViewSet enhance_oracle(const ConditioningBundle& bundle,
                                      const AnalyticScene& scene) {
  EnhancedViewSet out;
  out.provenance = EnhancerKind::oracle;
  for (const auto& bv : bundle.views) {
    ViewBundle gt = render_ground_truth(scene, bv.camera);
    double mse = 0;
    for (size_t i = 0; i < gt.rgb.data.size(); ++i)
      mse += sqr(double(gt.rgb.data[i]) - double(bv.rgb.data[i]));
    mse /= double(gt.rgb.data.size());
    out.psnr_vs_coarse.push_back(mse > 0 ? 10 * std::log10(1.0 / mse)
                                         : std::numeric_limits<double>::infinity());
    out.views.push_back({bv.view_id, bv.camera, std::move(gt.rgb)});
  }
  return out;
}

// Enhanced-view directory: same idea as the bundle, RGB only.
inline void save_enhanced(const std::filesystem::path& dir, const EnhancedViewSet& set) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["version"] = kBundleManifestVersion;
  manifest["provenance"] = provenance_name(set.provenance);
  json views_meta = json::array();
  for (const auto& v : set.views) {
    fs::path vdir = dir / view_dir_name(v.view_id);
    fs::create_directories(vdir);
    write_png(vdir / "rgb.png", quantize_unit(v.rgb));
    save_json_file(vdir / "camera.json", camera_to_json(v.camera));
    views_meta.push_back({{"view_id", v.view_id}, {"dir", view_dir_name(v.view_id)}});
  }
  manifest["views"] = views_meta;
  save_json_file(dir / "manifest.json", manifest);
}

inline EnhancedViewSet load_enhanced(const std::filesystem::path& dir) {
  EnhancedViewSet out;
  json manifest = load_json_file(dir / "manifest.json");
  require_keys(manifest, "enhanced manifest", {"version", "provenance", "views"},
               {"version", "provenance", "views"});
  if (manifest["version"].get<int>() != kBundleManifestVersion)
    throw std::runtime_error("unknown enhanced manifest version");
  std::string prov = manifest["provenance"].get<std::string>();
  out.provenance = prov == "stub" ? EnhancerKind::stub
                                  : (prov == "oracle" ? EnhancerKind::oracle : EnhancerKind::external);
  for (const auto& vm : manifest["views"]) {
    EnhancedView v;
    v.view_id = vm["view_id"].get<int>();
    std::filesystem::path vdir = dir / vm["dir"].get<std::string>();
    v.camera = camera_from_json(load_json_file(vdir / "camera.json"));
    v.rgb = to_unit_float(read_png(vdir / "rgb.png"));
    out.views.push_back(std::move(v));
  }
  return out;
}

// Multi-view refit: RGB-only supervision from the enhanced views (real
// generative outputs carry neither depth nor normals), warm-started from
// the Stage-I field. The dataset input view can be appended as one more
// RGB-only view.
template <typename T>
inline std::vector<FitHistoryRow> refit_multiview(TriplaneField<T>& field,
                                                  const EnhancedViewSet& enhanced,
                                                  const FitConfig& cfg,
                                                  const ViewBundle* input_view = nullptr,
                                                  const std::string& diagnostic_path = "") {
  if (enhanced.views.size() < 2)
    throw std::invalid_argument("refit_multiview needs at least 2 views");
  std::vector<ViewBundle> views;
  for (const auto& v : enhanced.views) {
    ViewBundle vb;
    vb.camera = v.camera;
    vb.rgb = v.rgb;
    vb.has_depth = false;
    vb.has_normal = false;
    views.push_back(std::move(vb));
  }
  if (input_view) {
    ViewBundle vb;
    vb.camera = input_view->camera;
    vb.rgb = input_view->rgb;
    vb.has_depth = false;
    vb.has_normal = false;
    views.push_back(std::move(vb));
  }
  FitConfig rcfg = cfg;
  rcfg.input_view = input_view ? int(views.size()) - 1 : 0;
  return fit(field, views, rcfg, LossWeights{}, diagnostic_path);
}

}  // namespace tpsdf

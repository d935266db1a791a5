#pragma once

// Pipeline stages shared by the CLI and the acceptance suite. Each stage
// writes its artifact plus a manifest.json (stage name, config hash, seed,
// format versions, timings, artifact paths); downstream stages refuse to
// run on a missing manifest or a mismatched config hash unless explicitly
// allowed. Timing fields are bookkeeping; artifact payloads are the
// deterministic part.

#include <chrono>
#include <filesystem>

#include "tpsdf/bundle.hpp"
#include "tpsdf/config.hpp"
#include "tpsdf/dataset.hpp"
#include "tpsdf/metrics.hpp"
#include "tpsdf/pfm_io.hpp"

namespace tpsdf {

namespace fs = std::filesystem;

inline constexpr const char* kVersionString = "tpsdf 0.1.0 (checkpoint TPSDF1, bundle manifest v1)";

class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_manifest_atomic(const fs::path& dir, json manifest) {
  manifest["versions"] = kVersionString;
  fs::path tmp = dir / "manifest.json.tmp";
  save_json_file(tmp, manifest);
  fs::rename(tmp, dir / "manifest.json");
}

inline json read_stage_manifest(const fs::path& dir, const std::string& expected_stage) {
  fs::path p = dir / "manifest.json";
  if (!fs::exists(p))
    throw StageError("missing prerequisite manifest: " + p.string() +
                     " (run the '" + expected_stage + "' stage first)");
  json m = load_json_file(p);
  if (!m.contains("stage") || m["stage"].get<std::string>() != expected_stage)
    throw StageError(p.string() + " was not written by the '" + expected_stage + "' stage");
  return m;
}

inline void check_config_hash(const json& manifest, const RunConfig& cfg, bool allow_mismatch) {
  std::string have = manifest.value("config_hash", "");
  std::string want = config_hash(cfg);
  if (have != want) {
    std::string msg = "config hash mismatch: stage artifact was produced with " + have +
                      ", current config hashes to " + want;
    if (!allow_mismatch) throw StageError(msg + " (pass --allow-mismatch to proceed)");
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
  }
}

class StageTimer {
 public:
  StageTimer() : t0_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

struct RunPaths {
  fs::path root;
  fs::path dataset() const { return root / "dataset"; }
  fs::path stage1_dir() const { return root / "stage1"; }
  fs::path stage1_checkpoint() const { return stage1_dir() / "field.tpsdf"; }
  fs::path bundle_dir() const { return root / "bundle"; }
  fs::path enhanced_dir() const { return root / "enhanced"; }
  fs::path refined_dir() const { return root / "refined"; }
  fs::path refined_checkpoint() const { return refined_dir() / "field.tpsdf"; }
  fs::path mesh_dir() const { return root / "mesh"; }
  fs::path final_mesh() const { return mesh_dir() / "refined.obj"; }
  fs::path stage1_mesh() const { return mesh_dir() / "stage1.obj"; }
  fs::path renders_dir() const { return root / "renders"; }
  fs::path report_path() const { return root / "report.json"; }
};

inline RunPaths run_paths(const RunConfig& cfg) { return RunPaths{cfg.out}; }

// --- gen-scene -----------------------------------------------------------------

// Writes the N-view training set, the holdout set (offset azimuths, slight
// elevation), and scene.json.
inline void stage_gen_scene(const RunConfig& cfg) {
  StageTimer timer;
  AnalyticScene scene = cfg.scene();
  RunPaths paths = run_paths(cfg);
  fs::create_directories(paths.dataset());

  double fx = framing_focal(cfg.rig.radius, scene_bounding_radius(scene), cfg.rig.resolution,
                            cfg.rig.fill);
  auto train_cams = make_orbit_cameras(cfg.rig.views, cfg.rig.radius, cfg.rig.elevation, fx, fx,
                                       cfg.rig.resolution, cfg.rig.resolution);
  std::vector<ViewBundle> train;
  for (const auto& cam : train_cams) train.push_back(render_ground_truth(scene, cam));
  save_views(paths.dataset(), train);
  save_json_file(paths.dataset() / "scene.json", scene_to_json(scene));

  if (cfg.rig.holdout > 0) {
    auto hold_cams = make_orbit_cameras(cfg.rig.holdout, cfg.rig.radius, cfg.rig.elevation + 0.25,
                                        fx, fx, cfg.rig.resolution, cfg.rig.resolution,
                                        kPi / cfg.rig.views);
    std::vector<ViewBundle> hold;
    for (const auto& cam : hold_cams) hold.push_back(render_ground_truth(scene, cam));
    save_views(paths.dataset() / "holdout", hold);
  }

  json manifest;
  manifest["stage"] = "gen-scene";
  manifest["config_hash"] = config_hash(cfg);
  manifest["seed"] = cfg.seed;
  manifest["views"] = cfg.rig.views;
  manifest["holdout"] = cfg.rig.holdout;
  manifest["timings_ms"] = {{"total", timer.ms()}};
  write_manifest_atomic(paths.dataset(), manifest);
}

// --- fit -----------------------------------------------------------------------

template <typename T = float>
inline std::vector<FitHistoryRow> stage_fit(const RunConfig& cfg, bool allow_mismatch = false) {
  StageTimer timer;
  RunPaths paths = run_paths(cfg);
  json ds_manifest = read_stage_manifest(paths.dataset(), "gen-scene");
  check_config_hash(ds_manifest, cfg, allow_mismatch);

  Dataset ds = load_dataset(paths.dataset());
  TriplaneField<T> field = init_field<T>(cfg.seed, cfg.field);
  fs::create_directories(paths.stage1_dir());
  auto history = fit(field, ds.views, cfg.fit_config(), cfg.loss,
                     (paths.stage1_dir() / "diagnostic.tpsdf").string());
  save_checkpoint(paths.stage1_checkpoint(), field);
  write_history_csv(paths.stage1_dir() / "history.csv", history);

  json manifest;
  manifest["stage"] = "fit";
  manifest["config_hash"] = config_hash(cfg);
  manifest["seed"] = cfg.seed;
  manifest["iterations"] = cfg.fit_iterations;
  manifest["checkpoint"] = paths.stage1_checkpoint().string();
  manifest["checkpoint_hash"] = hash_file(paths.stage1_checkpoint());
  manifest["final_loss"] = history.empty() ? 0.0 : history.back().total;
  manifest["timings_ms"] = {{"total", timer.ms()}};
  write_manifest_atomic(paths.stage1_dir(), manifest);
  return history;
}

// --- export-bundle ---------------------------------------------------------------

template <typename T = float>
inline void stage_export_bundle(const RunConfig& cfg, bool allow_mismatch = false) {
  StageTimer timer;
  RunPaths paths = run_paths(cfg);
  json fit_manifest = read_stage_manifest(paths.stage1_dir(), "fit");
  check_config_hash(fit_manifest, cfg, allow_mismatch);

  TriplaneField<T> field = load_checkpoint<T>(paths.stage1_checkpoint());
  AnalyticScene scene = cfg.scene();
  double fx = framing_focal(cfg.rig.radius, scene_bounding_radius(scene), cfg.rig.resolution,
                            cfg.rig.fill);
  auto cams = make_orbit_cameras(cfg.bundle.views, cfg.rig.radius, cfg.bundle.elevation, fx, fx,
                                 cfg.rig.resolution, cfg.rig.resolution);
  export_bundle(field, cams, cfg.sampling, T(cfg.beta_end),
                cfg.scene_preset.empty() ? "custom" : cfg.scene_preset,
                fit_manifest.value("checkpoint_hash", ""), paths.bundle_dir(), cfg.seed);

  json manifest = load_json_file(paths.bundle_dir() / "manifest.json");
  manifest["stage"] = "export-bundle";
  manifest["config_hash"] = config_hash(cfg);
  manifest["timings_ms"] = {{"total", timer.ms()}};
  write_manifest_atomic(paths.bundle_dir(), manifest);
}

// --- enhance ---------------------------------------------------------------------

inline void stage_enhance(const RunConfig& cfg, bool allow_mismatch = false) {
  StageTimer timer;
  RunPaths paths = run_paths(cfg);
  json bm = read_stage_manifest(paths.bundle_dir(), "export-bundle");
  check_config_hash(bm, cfg, allow_mismatch);

  ConditioningBundle bundle = import_bundle(paths.bundle_dir());
  EnhancedViewSet enhanced;
  if (cfg.enhancer == "oracle") enhanced = enhance_oracle(bundle, cfg.scene());
  else enhanced = enhance_stub(bundle);
  save_enhanced(paths.enhanced_dir(), enhanced);

  json manifest = load_json_file(paths.enhanced_dir() / "manifest.json");
  manifest["stage"] = "enhance";
  manifest["config_hash"] = config_hash(cfg);
  json psnrs = json::array();
  for (double p : enhanced.psnr_vs_coarse)
    psnrs.push_back(std::isfinite(p) ? json(p) : json("inf"));
  manifest["psnr_vs_coarse"] = psnrs;
  manifest["timings_ms"] = {{"total", timer.ms()}};
  write_manifest_atomic(paths.enhanced_dir(), manifest);
}

// --- refit -----------------------------------------------------------------------

template <typename T = float>
inline std::vector<FitHistoryRow> stage_refit(const RunConfig& cfg, bool allow_mismatch = false) {
  StageTimer timer;
  RunPaths paths = run_paths(cfg);
  json em = read_stage_manifest(paths.enhanced_dir(), "enhance");
  check_config_hash(em, cfg, allow_mismatch);

  TriplaneField<T> field = load_checkpoint<T>(paths.stage1_checkpoint());
  EnhancedViewSet enhanced = load_enhanced(paths.enhanced_dir());

  ViewBundle input_view;
  const ViewBundle* input_ptr = nullptr;
  if (cfg.refit.include_input_view) {
    Dataset ds = load_dataset(paths.dataset(), false);
    input_view = ds.views[size_t(cfg.fit_input_view)];
    input_ptr = &input_view;
  }
  fs::create_directories(paths.refined_dir());
  auto history = refit_multiview(field, enhanced, cfg.refit_config(), input_ptr,
                                 (paths.refined_dir() / "diagnostic.tpsdf").string());
  save_checkpoint(paths.refined_checkpoint(), field);
  write_history_csv(paths.refined_dir() / "history.csv", history);

  json manifest;
  manifest["stage"] = "refit";
  manifest["config_hash"] = config_hash(cfg);
  manifest["checkpoint"] = paths.refined_checkpoint().string();
  manifest["checkpoint_hash"] = hash_file(paths.refined_checkpoint());
  manifest["enhanced_views"] = int(enhanced.views.size());
  manifest["timings_ms"] = {{"total", timer.ms()}};
  write_manifest_atomic(paths.refined_dir(), manifest);
  return history;
}

// --- mesh ------------------------------------------------------------------------

template <typename T = float>
inline void stage_mesh(const RunConfig& cfg, bool allow_mismatch = false) {
  StageTimer timer;
  RunPaths paths = run_paths(cfg);
  json rm = read_stage_manifest(paths.refined_dir(), "refit");
  check_config_hash(rm, cfg, allow_mismatch);

  fs::create_directories(paths.mesh_dir());
  {
    TriplaneField<T> field = load_checkpoint<T>(paths.refined_checkpoint());
    export_obj(paths.final_mesh(), marching_cubes(field, cfg.mesh.resolution));
  }
  {
    TriplaneField<T> field = load_checkpoint<T>(paths.stage1_checkpoint());
    export_obj(paths.stage1_mesh(), marching_cubes(field, cfg.mesh.resolution));
  }

  json manifest;
  manifest["stage"] = "mesh";
  manifest["config_hash"] = config_hash(cfg);
  manifest["resolution"] = cfg.mesh.resolution;
  manifest["meshes"] = {paths.final_mesh().string(), paths.stage1_mesh().string()};
  manifest["timings_ms"] = {{"total", timer.ms()}};
  write_manifest_atomic(paths.mesh_dir(), manifest);
}

// --- render ----------------------------------------------------------------------

// Renders the field at the given cameras into dir with the dataset naming
// scheme (rgb_k.png, depth_k.pfm, normal_k.pfm, wsum_k.pfm).
template <typename T = float>
inline void render_cameras_to_dir(const TriplaneField<T>& field,
                                  const std::vector<CameraPose>& cams, const SamplingConfig& scfg,
                                  T beta, uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  save_json_file(dir / "cameras.json", cameras_to_json(cams));
  for (size_t k = 0; k < cams.size(); ++k) {
    Rng rng = Rng(seed).stream("render", int(k));
    RenderBuffers rb = render_view_field(field, cams[k], scfg, beta, rng);
    write_png(dir / ("rgb_" + std::to_string(k) + ".png"), quantize_unit(rb.rgb));
    write_pfm(dir / ("depth_" + std::to_string(k) + ".pfm"), rb.depth);
    write_pfm(dir / ("normal_" + std::to_string(k) + ".pfm"), rb.normal);
    write_pfm(dir / ("wsum_" + std::to_string(k) + ".pfm"), rb.wsum);
  }
}

template <typename T = float>
inline void stage_render(const RunConfig& cfg, bool allow_mismatch = false) {
  StageTimer timer;
  RunPaths paths = run_paths(cfg);
  json rm = read_stage_manifest(paths.refined_dir(), "refit");
  check_config_hash(rm, cfg, allow_mismatch);

  TriplaneField<T> field = load_checkpoint<T>(paths.refined_checkpoint());
  auto hold_cams = cameras_from_json(load_json_file(paths.dataset() / "holdout" / "cameras.json"));
  render_cameras_to_dir(field, hold_cams, cfg.sampling, T(cfg.beta_end), cfg.seed,
                        paths.renders_dir());

  json manifest;
  manifest["stage"] = "render";
  manifest["config_hash"] = config_hash(cfg);
  manifest["views"] = int(hold_cams.size());
  manifest["timings_ms"] = {{"total", timer.ms()}};
  write_manifest_atomic(paths.renders_dir(), manifest);
}

// --- eval ------------------------------------------------------------------------

struct EvalReport {
  double chamfer = 0, p2s = 0, nc = 0;
  double psnr_mean = 0, ssim_mean = 0;
  double depth_err = 0, normal_err = 0;
  std::vector<std::array<double, 2>> per_view;  // psnr, ssim
  bool psnr_mean_infinite = false;

  json to_json() const {
    json j;
    j["chamfer"] = chamfer;
    j["p2s"] = p2s;
    j["nc"] = nc;
    j["psnr_mean"] = psnr_mean_infinite ? json("inf") : json(psnr_mean);
    j["ssim_mean"] = ssim_mean;
    j["depth_err"] = depth_err;
    j["normal_err"] = normal_err;
    return j;
  }
};

// Geometry-only comparison of two meshes (shared by the ablation runs).
inline void eval_geometry(const TriangleMesh& pred, const TriangleMesh& gt, int64_t samples,
                          uint64_t seed, double& chamfer_out, double& p2s_out, double& nc_out) {
  PointCloud pc_pred = sample_surface(pred, samples, Rng(seed).stream("eval", "cloud"));
  PointCloud pc_gt = sample_surface(gt, samples, Rng(seed).stream("eval", "cloud"));
  chamfer_out = chamfer(pc_pred, pc_gt);
  p2s_out = p2s(pc_gt, pred);
  nc_out = normal_consistency(pc_pred, pc_gt);
}

// pred mesh + pred renders vs the dataset's holdout ground truth.
inline EvalReport evaluate_run(const fs::path& pred_mesh_path, const fs::path& renders_dir,
                               const fs::path& dataset_dir, const EvalStageConfig& ecfg,
                               uint64_t seed) {
  EvalReport rep;
  AnalyticScene scene = scene_from_json(load_json_file(dataset_dir / "scene.json"));
  TriangleMesh pred = import_obj(pred_mesh_path);
  pred.validate();
  TriangleMesh gt = marching_cubes(scene, ecfg.gt_mesh_resolution);
  eval_geometry(pred, gt, ecfg.surface_samples, seed, rep.chamfer, rep.p2s, rep.nc);

  auto hold = load_views(dataset_dir / "holdout");
  double psnr_acc = 0, ssim_acc = 0, derr = 0, nerr = 0;
  int finite_psnr = 0;
  for (size_t k = 0; k < hold.size(); ++k) {
    ImageF rgb = to_unit_float(read_png(renders_dir / ("rgb_" + std::to_string(k) + ".png")));
    double p = psnr(rgb, hold[k].rgb);
    if (std::isfinite(p)) {
      psnr_acc += p;
      ++finite_psnr;
    }
    double s = ssim(rgb, hold[k].rgb);
    ssim_acc += s;
    rep.per_view.push_back({p, s});

    ViewBundle pv;
    pv.camera = hold[k].camera;
    pv.rgb = rgb;
    pv.depth = read_pfm(renders_dir / ("depth_" + std::to_string(k) + ".pfm"));
    pv.normal = read_pfm(renders_dir / ("normal_" + std::to_string(k) + ".pfm"));
    pv.mask = Image<uint8_t>(pv.depth.width, pv.depth.height, 1, 0);
    for (size_t i = 0; i < pv.depth.data.size(); ++i)
      pv.mask.data[i] = pv.depth.data[i] > 0 ? 255 : 0;
    DepthNormalError dn = depth_normal_error(pv, hold[k]);
    derr += dn.depth_mae_x100;
    nerr += dn.normal_error;
  }
  const double n = double(hold.size());
  rep.psnr_mean_infinite = finite_psnr == 0;
  rep.psnr_mean = finite_psnr ? psnr_acc / finite_psnr : 0.0;
  rep.ssim_mean = ssim_acc / n;
  rep.depth_err = derr / n;
  rep.normal_err = nerr / n;
  return rep;
}

inline void write_per_view_csv(const fs::path& path, const EvalReport& rep) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "view,psnr,ssim\n";
  for (size_t k = 0; k < rep.per_view.size(); ++k) {
    if (std::isfinite(rep.per_view[k][0])) f << k << "," << rep.per_view[k][0];
    else f << k << ",inf";
    f << "," << rep.per_view[k][1] << "\n";
  }
}

template <typename T = float>
inline json stage_eval(const RunConfig& cfg, bool allow_mismatch = false) {
  StageTimer timer;
  RunPaths paths = run_paths(cfg);
  json mm = read_stage_manifest(paths.mesh_dir(), "mesh");
  check_config_hash(mm, cfg, allow_mismatch);
  read_stage_manifest(paths.renders_dir(), "render");

  EvalReport rep = evaluate_run(paths.final_mesh(), paths.renders_dir(), paths.dataset(),
                                cfg.eval, cfg.seed);
  json report = rep.to_json();

  // Stage-I geometry for before/after comparisons.
  {
    AnalyticScene scene = cfg.scene();
    TriangleMesh gt = marching_cubes(scene, cfg.eval.gt_mesh_resolution);
    TriangleMesh s1 = import_obj(paths.stage1_mesh());
    double ch, ps, nc;
    eval_geometry(s1, gt, cfg.eval.surface_samples, cfg.seed, ch, ps, nc);
    report["stage1_geometry"] = {{"chamfer", ch}, {"p2s", ps}, {"nc", nc}};
  }

  // Eikonal residual of the refined field over 1e4 box samples.
  {
    TriplaneField<T> field = load_checkpoint<T>(paths.refined_checkpoint());
    Rng rng = Rng(cfg.seed).stream("eval", "eik");
    double acc = 0;
    const int n = 10000;
    T eps = field.default_eps();
    for (int i = 0; i < n; ++i) {
      Vec3<double> p = rng.in_unit_box();
      Vec3<T> g = field_gradient(field, Vec3<T>{T(p.x), T(p.y), T(p.z)}, eps);
      acc += std::abs(double(norm(g)) - 1.0);
    }
    report["eik_residual"] = acc / n;
  }

  report["config_hash"] = config_hash(cfg);
  report["seed"] = cfg.seed;
  write_per_view_csv(paths.root / "per_view.csv", rep);
  save_json_file(paths.report_path(), report);

  json manifest;
  manifest["stage"] = "eval";
  manifest["config_hash"] = config_hash(cfg);
  manifest["report"] = paths.report_path().string();
  manifest["timings_ms"] = {{"total", timer.ms()}};
  fs::create_directories(paths.root / "eval");
  write_manifest_atomic(paths.root / "eval", manifest);
  return report;
}

// --- full pipeline ------------------------------------------------------------------

template <typename T = float>
inline json run_pipeline(const RunConfig& cfg, bool allow_mismatch = false,
                         const std::function<void(const std::string&)>& log = {}) {
  auto note = [&](const std::string& s) {
    if (log) log(s);
  };
  note("gen-scene");
  stage_gen_scene(cfg);
  note("fit");
  stage_fit<T>(cfg, allow_mismatch);
  note("export-bundle");
  stage_export_bundle<T>(cfg, allow_mismatch);
  note("enhance");
  stage_enhance(cfg, allow_mismatch);
  note("refit");
  stage_refit<T>(cfg, allow_mismatch);
  note("mesh");
  stage_mesh<T>(cfg, allow_mismatch);
  note("render");
  stage_render<T>(cfg, allow_mismatch);
  note("eval");
  return stage_eval<T>(cfg, allow_mismatch);
}

}  // namespace tpsdf

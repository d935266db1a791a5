#pragma once

// Run configuration: one JSON document (preset or file) plus flag
// overrides; flags win. Parsing is strict at every level, unknown keys are
// errors. The canonical JSON dump of the effective config is hashed into
// every stage manifest so stages can refuse mismatched inputs.

#include <filesystem>
#include <optional>
#include <string>

#include "tpsdf/losses.hpp"
#include "tpsdf/presets.hpp"
#include "tpsdf/sampling.hpp"
#include "tpsdf/serialize.hpp"
#include "tpsdf/training.hpp"

namespace tpsdf {

struct RigConfig {
  int views = 8;
  double radius = 2.5;
  double elevation = 0.0;
  int resolution = 64;
  int holdout = 4;
  double fill = 0.42;  // scene bounding sphere / half-image ratio
};

struct BundleStageConfig {
  int views = 12;
  double elevation = 0.0;
};

struct RefitStageConfig {
  int64_t iterations = 800;
  double lr = 1e-3;
  bool cosine = true;
  int patch = 16;
  int views_per_step = 4;
  bool include_input_view = true;
};

struct MeshStageConfig {
  int resolution = 128;
};

struct EvalStageConfig {
  int64_t surface_samples = 10000;
  int gt_mesh_resolution = 128;
};

struct RunConfig {
  uint64_t seed = 7;
  int threads = 0;  // 0 -> hardware concurrency

  std::string scene_preset = "sphere";  // empty when a scene json is given
  json scene_json;                      // inline scene, used when preset empty

  RigConfig rig;
  FieldDims field;
  SamplingConfig sampling{48, 64, true};  // reference sampling for fits/renders
  double beta0 = 0.1, beta_end = 0.002;
  LossWeights loss;

  // Stage-I fit.
  int64_t fit_iterations = 2000;
  double fit_lr = 1e-3;
  bool fit_cosine = true;
  int fit_patch = 16;
  int fit_views_per_step = 4;
  int fit_input_view = 0;

  BundleStageConfig bundle;
  RefitStageConfig refit;
  MeshStageConfig mesh;
  EvalStageConfig eval;

  std::string enhancer = "stub";  // stub | oracle
  std::filesystem::path out = "runs/out";

  AnalyticScene scene() const {
    if (!scene_preset.empty()) return scene_from_preset(scene_preset);
    return scene_from_json(scene_json);
  }

  FitConfig fit_config() const {
    FitConfig f;
    f.iterations = fit_iterations;
    f.lr = fit_lr;
    f.cosine = fit_cosine;
    f.patch = fit_patch;
    f.views_per_step = fit_views_per_step;
    f.input_view = fit_input_view;
    f.seed = seed;
    f.beta0 = beta0;
    f.beta_end = beta_end;
    f.sampling = sampling;
    return f;
  }

  FitConfig refit_config() const {
    FitConfig f = fit_config();
    f.iterations = refit.iterations;
    f.lr = refit.lr;
    f.cosine = refit.cosine;
    f.patch = refit.patch;
    f.views_per_step = refit.views_per_step;
    f.seed = seed + 1;  // distinct stream family from the stage-I fit
    return f;
  }

  json to_json() const;
  static RunConfig from_json(const json& j);
};

inline json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["threads"] = threads;
  if (!scene_preset.empty()) j["scene"] = {{"preset", scene_preset}};
  else j["scene"] = scene_json;
  j["rig"] = {{"views", rig.views},       {"radius", rig.radius},
              {"elevation", rig.elevation}, {"resolution", rig.resolution},
              {"holdout", rig.holdout},   {"fill", rig.fill}};
  j["field"] = {{"plane_res", field.plane_res},
                {"plane_channels", field.plane_channels},
                {"latent_dim", field.latent_dim},
                {"sdf_hidden", field.sdf_hidden},
                {"rgb_hidden", field.rgb_hidden}};
  j["sampling"] = {{"n_coarse", sampling.n_coarse}, {"n_fine", sampling.n_fine},
                   {"jitter", sampling.jitter}};
  j["density"] = {{"beta0", beta0}, {"beta_end", beta_end}};
  j["loss"] = {{"lambda_lpips", loss.lambda_lpips}, {"lambda_n", loss.lambda_n},
               {"lambda_d", loss.lambda_d},         {"lambda_eik", loss.lambda_eik},
               {"lambda_si", loss.lambda_si}};
  j["fit"] = {{"iterations", fit_iterations}, {"lr", fit_lr},
              {"cosine", fit_cosine},          {"patch", fit_patch},
              {"views_per_step", fit_views_per_step}, {"input_view", fit_input_view}};
  j["bundle"] = {{"views", bundle.views}, {"elevation", bundle.elevation}};
  j["refit"] = {{"iterations", refit.iterations}, {"lr", refit.lr},
                {"cosine", refit.cosine},          {"patch", refit.patch},
                {"views_per_step", refit.views_per_step},
                {"include_input_view", refit.include_input_view}};
  j["mesh"] = {{"resolution", mesh.resolution}};
  j["eval"] = {{"surface_samples", eval.surface_samples},
               {"gt_mesh_resolution", eval.gt_mesh_resolution}};
  j["enhancer"] = enhancer;
  j["out"] = out.string();
  return j;
}

inline RunConfig RunConfig::from_json(const json& j) {
  require_keys(j, "config",
               {"seed", "threads", "scene", "rig", "field", "sampling", "density", "loss", "fit",
                "bundle", "refit", "mesh", "eval", "enhancer", "out"});
  RunConfig c;
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  if (j.contains("threads")) c.threads = j["threads"].get<int>();
  if (j.contains("scene")) {
    const json& s = j["scene"];
    if (s.contains("preset")) {
      require_keys(s, "scene", {"preset"});
      c.scene_preset = s["preset"].get<std::string>();
      scene_from_preset(c.scene_preset);  // validates the name
    } else {
      c.scene_preset.clear();
      c.scene_json = s;
      scene_from_json(s);  // validates structure and bounds
    }
  }
  if (j.contains("rig")) {
    const json& r = j["rig"];
    require_keys(r, "rig", {"views", "radius", "elevation", "resolution", "holdout", "fill"});
    if (r.contains("views")) c.rig.views = r["views"].get<int>();
    if (r.contains("radius")) c.rig.radius = r["radius"].get<double>();
    if (r.contains("elevation")) c.rig.elevation = r["elevation"].get<double>();
    if (r.contains("resolution")) c.rig.resolution = r["resolution"].get<int>();
    if (r.contains("holdout")) c.rig.holdout = r["holdout"].get<int>();
    if (r.contains("fill")) c.rig.fill = r["fill"].get<double>();
  }
  if (j.contains("field")) {
    const json& f = j["field"];
    require_keys(f, "field", {"plane_res", "plane_channels", "latent_dim", "sdf_hidden", "rgb_hidden"});
    if (f.contains("plane_res")) c.field.plane_res = f["plane_res"].get<int>();
    if (f.contains("plane_channels")) c.field.plane_channels = f["plane_channels"].get<int>();
    if (f.contains("latent_dim")) c.field.latent_dim = f["latent_dim"].get<int>();
    if (f.contains("sdf_hidden")) c.field.sdf_hidden = f["sdf_hidden"].get<std::vector<int>>();
    if (f.contains("rgb_hidden")) c.field.rgb_hidden = f["rgb_hidden"].get<std::vector<int>>();
  }
  if (j.contains("sampling")) {
    const json& s = j["sampling"];
    require_keys(s, "sampling", {"n_coarse", "n_fine", "jitter"});
    if (s.contains("n_coarse")) c.sampling.n_coarse = s["n_coarse"].get<int>();
    if (s.contains("n_fine")) c.sampling.n_fine = s["n_fine"].get<int>();
    if (s.contains("jitter")) c.sampling.jitter = s["jitter"].get<bool>();
    c.sampling.validate();
  }
  if (j.contains("density")) {
    const json& d = j["density"];
    require_keys(d, "density", {"beta0", "beta_end"});
    if (d.contains("beta0")) c.beta0 = d["beta0"].get<double>();
    if (d.contains("beta_end")) c.beta_end = d["beta_end"].get<double>();
  }
  if (j.contains("loss")) {
    const json& l = j["loss"];
    require_keys(l, "loss", {"lambda_lpips", "lambda_n", "lambda_d", "lambda_eik", "lambda_si"});
    if (l.contains("lambda_lpips")) c.loss.lambda_lpips = l["lambda_lpips"].get<double>();
    if (l.contains("lambda_n")) c.loss.lambda_n = l["lambda_n"].get<double>();
    if (l.contains("lambda_d")) c.loss.lambda_d = l["lambda_d"].get<double>();
    if (l.contains("lambda_eik")) c.loss.lambda_eik = l["lambda_eik"].get<double>();
    if (l.contains("lambda_si")) c.loss.lambda_si = l["lambda_si"].get<double>();
    c.loss.validate();
  }
  if (j.contains("fit")) {
    const json& f = j["fit"];
    require_keys(f, "fit", {"iterations", "lr", "cosine", "patch", "views_per_step", "input_view"});
    if (f.contains("iterations")) c.fit_iterations = f["iterations"].get<int64_t>();
    if (f.contains("lr")) c.fit_lr = f["lr"].get<double>();
    if (f.contains("cosine")) c.fit_cosine = f["cosine"].get<bool>();
    if (f.contains("patch")) c.fit_patch = f["patch"].get<int>();
    if (f.contains("views_per_step")) c.fit_views_per_step = f["views_per_step"].get<int>();
    if (f.contains("input_view")) c.fit_input_view = f["input_view"].get<int>();
  }
  if (j.contains("bundle")) {
    const json& b = j["bundle"];
    require_keys(b, "bundle", {"views", "elevation"});
    if (b.contains("views")) c.bundle.views = b["views"].get<int>();
    if (b.contains("elevation")) c.bundle.elevation = b["elevation"].get<double>();
  }
  if (j.contains("refit")) {
    const json& r = j["refit"];
    require_keys(r, "refit",
                 {"iterations", "lr", "cosine", "patch", "views_per_step", "include_input_view"});
    if (r.contains("iterations")) c.refit.iterations = r["iterations"].get<int64_t>();
    if (r.contains("lr")) c.refit.lr = r["lr"].get<double>();
    if (r.contains("cosine")) c.refit.cosine = r["cosine"].get<bool>();
    if (r.contains("patch")) c.refit.patch = r["patch"].get<int>();
    if (r.contains("views_per_step")) c.refit.views_per_step = r["views_per_step"].get<int>();
    if (r.contains("include_input_view"))
      c.refit.include_input_view = r["include_input_view"].get<bool>();
  }
  if (j.contains("mesh")) {
    require_keys(j["mesh"], "mesh", {"resolution"});
    if (j["mesh"].contains("resolution")) c.mesh.resolution = j["mesh"]["resolution"].get<int>();
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    require_keys(e, "eval", {"surface_samples", "gt_mesh_resolution"});
    if (e.contains("surface_samples")) c.eval.surface_samples = e["surface_samples"].get<int64_t>();
    if (e.contains("gt_mesh_resolution"))
      c.eval.gt_mesh_resolution = e["gt_mesh_resolution"].get<int>();
  }
  if (j.contains("enhancer")) {
    c.enhancer = j["enhancer"].get<std::string>();
    if (c.enhancer != "stub" && c.enhancer != "oracle")
      throw std::runtime_error("config: enhancer must be 'stub' or 'oracle'");
  }
  if (j.contains("out")) c.out = j["out"].get<std::string>();
  return c;
}

// Built-in desk-scale presets. Values marked desk-scale trade fidelity for
// CPU wall-clock; the reference-scale knobs (48/64 samples, patch 64, the
// loss weights) remain the type defaults.
inline RunConfig preset_run_config(const std::string& name) {
  RunConfig c;
  if (name == "sphere") {
    c.scene_preset = "sphere";
    c.rig.views = 8;
    c.fit_iterations = 2000;
    c.fit_views_per_step = 4;
    c.fit_patch = 16;               // desk-scale
    c.sampling = {24, 16, true};    // desk-scale
    c.beta_end = 0.004;
    c.refit.patch = 16;
    c.out = "runs/sphere";
  } else if (name == "capsule-human") {
    c.scene_preset = "capsule-human";
    c.rig.views = 8;
    c.rig.fill = 0.6;               // thin limbs need more pixels
    c.fit_iterations = 1500;
    c.fit_views_per_step = 1;       // single-view Stage I
    c.fit_patch = 16;
    c.sampling = {24, 16, true};
    c.beta_end = 0.004;
    c.refit.iterations = 900;
    c.refit.patch = 16;
    c.refit.views_per_step = 4;
    c.enhancer = "oracle";
    c.out = "runs/capsule-human";
  } else {
    throw std::runtime_error("unknown preset '" + name + "' (sphere | capsule-human)");
  }
  return c;
}

inline std::string config_hash(const RunConfig& c) { return hash_json(c.to_json()); }

}  // namespace tpsdf

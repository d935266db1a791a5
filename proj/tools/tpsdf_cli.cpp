// tpsdf: triplane-SDF fitting, rendering, and evaluation pipeline.
//
// Exit codes: 0 success, 1 usage/config error, 2 numerical failure
// (non-finite loss or failed gradient check), 3 threshold failure in
// --check mode.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "tpsdf/pipeline.hpp"

using namespace tpsdf;

namespace {

struct CommonOpts {
  std::string preset;
  std::string config_file;
  std::string out;
  int64_t seed = -1;
  int threads = 0;
  bool allow_mismatch = false;

  // Stage overrides; negative/empty means "keep config value".
  int64_t iterations = -1;
  double lr = -1;
  bool paper_lr = false;
  int patch = -1;
  int views = -1;
  int bundle_views = -1;
  int64_t refit_iterations = -1;
  int mesh_res = -1;
  std::string enhancer;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_overrides = true) {
  cmd->add_option("--preset", o.preset, "built-in config: sphere | capsule-human");
  cmd->add_option("--config", o.config_file, "config JSON file");
  cmd->add_option("--out", o.out, "run directory (overrides config)");
  cmd->add_option("--seed", o.seed, "root seed (overrides config)");
  cmd->add_option("--threads", o.threads, "worker thread cap (0 = hardware)");
  cmd->add_flag("--allow-mismatch", o.allow_mismatch,
                "proceed on config-hash mismatch between stages");
  if (with_overrides) {
    cmd->add_option("--iterations", o.iterations, "fit iterations");
    cmd->add_option("--lr", o.lr, "fit learning rate");
    cmd->add_flag("--paper-lr", o.paper_lr, "use the reference learning rate 2e-5");
    cmd->add_option("--patch", o.patch, "fit patch size");
    cmd->add_option("--views", o.views, "training views in the dataset rig");
    cmd->add_option("--bundle-views", o.bundle_views, "conditioning bundle view count");
    cmd->add_option("--refit-iterations", o.refit_iterations, "refit iterations");
    cmd->add_option("--mesh-res", o.mesh_res, "marching cubes resolution");
    cmd->add_option("--enhancer", o.enhancer, "stub | oracle");
  }
}

RunConfig resolve_config(const CommonOpts& o) {
  if (!o.preset.empty() && !o.config_file.empty())
    throw std::runtime_error("give either --preset or --config, not both");
  RunConfig cfg;
  if (!o.config_file.empty()) cfg = RunConfig::from_json(load_json_file(o.config_file));
  else cfg = preset_run_config(o.preset.empty() ? "sphere" : o.preset);

  if (o.seed >= 0) cfg.seed = uint64_t(o.seed);
  if (!o.out.empty()) cfg.out = o.out;
  if (o.threads > 0) cfg.threads = o.threads;
  if (o.iterations > 0) cfg.fit_iterations = o.iterations;
  if (o.lr > 0) cfg.fit_lr = o.lr;
  if (o.paper_lr) cfg.fit_lr = 2e-5;
  if (o.patch > 0) cfg.fit_patch = o.patch;
  if (o.views > 0) cfg.rig.views = o.views;
  if (o.bundle_views > 0) cfg.bundle.views = o.bundle_views;
  if (o.refit_iterations > 0) cfg.refit.iterations = o.refit_iterations;
  if (o.mesh_res > 0) cfg.mesh.resolution = o.mesh_res;
  if (!o.enhancer.empty()) {
    if (o.enhancer != "stub" && o.enhancer != "oracle")
      throw std::runtime_error("--enhancer must be stub or oracle");
    cfg.enhancer = o.enhancer;
  }

  set_thread_count(cfg.threads > 0 ? cfg.threads
                                   : int(std::max(1u, std::thread::hardware_concurrency())));
  return cfg;
}

// Preset-specific thresholds for --check mode.
int check_report(const RunConfig& cfg, const json& report) {
  bool ok = true;
  auto expect = [&](bool cond, const std::string& what) {
    std::fprintf(stderr, "[%s] %s\n", cond ? "ok" : "FAIL", what.c_str());
    ok = ok && cond;
  };
  if (cfg.scene_preset == "sphere") {
    double psnr = report["psnr_mean"].is_string() ? 1e9 : report["psnr_mean"].get<double>();
    expect(psnr > 25.0, "holdout PSNR > 25 dB (got " + std::to_string(psnr) + ")");
    expect(report["chamfer"].get<double>() < 2.0,
           "chamfer < 2.0 (got " + std::to_string(report["chamfer"].get<double>()) + ")");
    expect(report["eik_residual"].get<double>() < 0.15,
           "eikonal residual < 0.15 (got " +
               std::to_string(report["eik_residual"].get<double>()) + ")");
  } else if (cfg.scene_preset == "capsule-human") {
    double final_ch = report["chamfer"].get<double>();
    double stage1_ch = report["stage1_geometry"]["chamfer"].get<double>();
    expect(final_ch < stage1_ch, "refined chamfer " + std::to_string(final_ch) +
                                     " < stage-I chamfer " + std::to_string(stage1_ch));
  } else {
    std::fprintf(stderr, "--check has no thresholds for custom scenes\n");
  }
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"triplane-SDF volume rendering pipeline"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "print format versions and exit");

  CommonOpts o;
  bool check_mode = false;

  auto* cmd_gen = app.add_subcommand("gen-scene", "render a synthetic multi-view dataset");
  add_common(cmd_gen, o);
  auto* cmd_fit = app.add_subcommand("fit", "stage-I per-scene fit");
  add_common(cmd_fit, o);
  auto* cmd_export = app.add_subcommand("export-bundle", "write the conditioning bundle");
  add_common(cmd_export, o);
  auto* cmd_enhance = app.add_subcommand("enhance", "run the stub/oracle enhancer");
  add_common(cmd_enhance, o);
  auto* cmd_refit = app.add_subcommand("refit", "multi-view refit from enhanced views");
  add_common(cmd_refit, o);
  auto* cmd_mesh = app.add_subcommand("mesh", "marching-cubes extraction");
  add_common(cmd_mesh, o);
  auto* cmd_render = app.add_subcommand("render", "render holdout views from the refined field");
  add_common(cmd_render, o);

  auto* cmd_eval = app.add_subcommand("eval", "evaluate a mesh + renders against a dataset");
  std::string eval_mesh, eval_renders, eval_dataset, eval_out = "report.json";
  int64_t eval_samples = 10000;
  int eval_gt_res = 128;
  cmd_eval->add_option("--mesh", eval_mesh, "predicted mesh (OBJ)")->required();
  cmd_eval->add_option("--renders", eval_renders, "predicted renders directory")->required();
  cmd_eval->add_option("--dataset", eval_dataset, "ground-truth dataset directory")->required();
  cmd_eval->add_option("--report", eval_out, "output report path");
  cmd_eval->add_option("--samples", eval_samples, "surface samples per mesh");
  cmd_eval->add_option("--gt-res", eval_gt_res, "GT marching cubes resolution");
  int64_t eval_seed = 7;
  cmd_eval->add_option("--seed", eval_seed, "sampling seed");

  auto* cmd_gradcheck = app.add_subcommand("gradcheck", "full-pipeline finite-difference check");
  bool gc_tiny = false;
  int gc_seeds = 3;
  double gc_threshold = 1e-3;
  cmd_gradcheck->add_flag("--tiny", gc_tiny, "tiny instance (the default and only mode)");
  cmd_gradcheck->add_option("--seeds", gc_seeds, "number of seeds");
  cmd_gradcheck->add_option("--threshold", gc_threshold, "max relative error allowed");

  auto* cmd_pipeline =
      app.add_subcommand("pipeline", "gen -> fit -> bundle -> enhance -> refit -> mesh -> eval");
  add_common(cmd_pipeline, o);
  cmd_pipeline->add_flag("--check", check_mode, "verify preset thresholds; exit 3 on failure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 1 : 0;
  }

  if (show_version) {
    std::puts(kVersionString);
    return 0;
  }

  try {
    if (cmd_gen->parsed()) {
      stage_gen_scene(resolve_config(o));
    } else if (cmd_fit->parsed()) {
      RunConfig cfg = resolve_config(o);
      auto hist = stage_fit<float>(cfg, o.allow_mismatch);
      std::fprintf(stderr, "fit done: %lld iterations, final loss %.6f\n",
                   static_cast<long long>(hist.size()), hist.empty() ? 0.0 : hist.back().total);
    } else if (cmd_export->parsed()) {
      stage_export_bundle<float>(resolve_config(o), o.allow_mismatch);
    } else if (cmd_enhance->parsed()) {
      stage_enhance(resolve_config(o), o.allow_mismatch);
    } else if (cmd_refit->parsed()) {
      stage_refit<float>(resolve_config(o), o.allow_mismatch);
    } else if (cmd_mesh->parsed()) {
      stage_mesh<float>(resolve_config(o), o.allow_mismatch);
    } else if (cmd_render->parsed()) {
      stage_render<float>(resolve_config(o), o.allow_mismatch);
    } else if (cmd_eval->parsed()) {
      EvalStageConfig ecfg;
      ecfg.surface_samples = eval_samples;
      ecfg.gt_mesh_resolution = eval_gt_res;
      EvalReport rep =
          evaluate_run(eval_mesh, eval_renders, eval_dataset, ecfg, uint64_t(eval_seed));
      save_json_file(eval_out, rep.to_json());
      write_per_view_csv(std::filesystem::path(eval_out).replace_extension(".per_view.csv"), rep);
      std::cout << rep.to_json().dump(2) << "\n";
    } else if (cmd_gradcheck->parsed()) {
      (void)gc_tiny;  // the tiny instance is the only supported mode
      double worst = 0;
      for (int s = 0; s < gc_seeds; ++s) {
        auto report = gradcheck_full_pipeline(uint64_t(1000 + s));
        std::fprintf(stderr, "seed %d: max rel err %.3e (block %s, index %lld)\n", 1000 + s,
                     report.max_rel_err, report.worst_block.c_str(),
                     static_cast<long long>(report.worst_index));
        worst = std::max(worst, report.max_rel_err);
      }
      if (worst >= gc_threshold) {
        std::fprintf(stderr, "gradcheck FAILED: %.3e >= %.3e\n", worst, gc_threshold);
        return 2;
      }
      std::fprintf(stderr, "gradcheck passed: %.3e < %.3e\n", worst, gc_threshold);
    } else if (cmd_pipeline->parsed()) {
      RunConfig cfg = resolve_config(o);
      json report = run_pipeline<float>(cfg, o.allow_mismatch, [](const std::string& s) {
        std::fprintf(stderr, "[pipeline] %s\n", s.c_str());
      });
      std::cout << report.dump(2) << "\n";
      if (check_mode) return check_report(cfg, report);
    } else {
      std::cout << app.help();
      return 1;
    }
  } catch (const NanAbort& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const CLI::Error& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

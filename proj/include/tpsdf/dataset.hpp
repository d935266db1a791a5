#pragma once

// Dataset directory layout:
//   cameras.json              array of cameras, index k = view id
//   rgb_{k}.png               8-bit color
//   depth_{k}.pfm             1-channel, camera-space ray distance, 0 = background
//   normal_{k}.pfm            3-channel world-frame unit normals, 0 at background
//   mask_{k}.png              8-bit gray, 255 = foreground
//   scene.json                the analytic scene the views were rendered from
//   holdout/                  same layout, held-out evaluation views

#include <filesystem>
#include <string>
#include <vector>

#include "tpsdf/analytic.hpp"
#include "tpsdf/pfm_io.hpp"
#include "tpsdf/png_io.hpp"
#include "tpsdf/serialize.hpp"

namespace tpsdf {

namespace fs = std::filesystem;

inline void save_view_bundle(const fs::path& dir, int k, const ViewBundle& vb) {
  write_png(dir / ("rgb_" + std::to_string(k) + ".png"), quantize_unit(vb.rgb));
  write_pfm(dir / ("depth_" + std::to_string(k) + ".pfm"), vb.depth);
  write_pfm(dir / ("normal_" + std::to_string(k) + ".pfm"), vb.normal);
  write_png(dir / ("mask_" + std::to_string(k) + ".png"), vb.mask);
}

inline ViewBundle load_view_bundle(const fs::path& dir, int k, const CameraPose& cam) {
  ViewBundle vb;
  vb.camera = cam;
  vb.rgb = to_unit_float(read_png(dir / ("rgb_" + std::to_string(k) + ".png")));
  vb.depth = read_pfm(dir / ("depth_" + std::to_string(k) + ".pfm"));
  vb.normal = read_pfm(dir / ("normal_" + std::to_string(k) + ".pfm"));
  vb.mask = read_png(dir / ("mask_" + std::to_string(k) + ".png"));
  if (vb.rgb.width != cam.width || vb.rgb.height != cam.height)
    throw std::runtime_error("view " + std::to_string(k) + ": image size does not match camera");
  if (!vb.depth.same_shape(ImageF(cam.width, cam.height, 1)) && vb.depth.channels != 1)
    throw std::runtime_error("view " + std::to_string(k) + ": depth map shape mismatch");
  return vb;
}

struct Dataset {
  std::vector<ViewBundle> views;
  std::vector<ViewBundle> holdout;
  AnalyticScene scene;
  fs::path dir;
};

inline void save_views(const fs::path& dir, const std::vector<ViewBundle>& views) {
  fs::create_directories(dir);
  std::vector<CameraPose> cams;
  for (const auto& v : views) cams.push_back(v.camera);
  save_json_file(dir / "cameras.json", cameras_to_json(cams));
  for (size_t k = 0; k < views.size(); ++k) save_view_bundle(dir, int(k), views[k]);
}

inline std::vector<ViewBundle> load_views(const fs::path& dir) {
  auto cams = cameras_from_json(load_json_file(dir / "cameras.json"));
  std::vector<ViewBundle> views;
  for (size_t k = 0; k < cams.size(); ++k)
    views.push_back(load_view_bundle(dir, int(k), cams[k]));
  return views;
}

inline Dataset load_dataset(const fs::path& dir, bool with_holdout = true) {
  Dataset ds;
  ds.dir = dir;
  ds.scene = scene_from_json(load_json_file(dir / "scene.json"));
  ds.views = load_views(dir);
  if (with_holdout && fs::exists(dir / "holdout" / "cameras.json"))
    ds.holdout = load_views(dir / "holdout");
  return ds;
}

}  // namespace tpsdf

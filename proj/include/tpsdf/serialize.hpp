#pragma once

// JSON (de)serialization for cameras and analytic scenes, plus the strict
// object-key validation used by every config/manifest reader: unknown keys
// are always an error, never silently dropped.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "tpsdf/analytic.hpp"
#include "tpsdf/camera.hpp"

namespace tpsdf {

using json = nlohmann::json;

inline void require_keys(const json& obj, const char* what,
                         std::initializer_list<const char*> allowed,
                         std::initializer_list<const char*> required = {}) {
  if (!obj.is_object()) throw std::runtime_error(std::string(what) + ": expected a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key()))
      throw std::runtime_error(std::string(what) + ": unknown key '" + it.key() + "'");
  for (const char* r : required)
    if (!obj.contains(r))
      throw std::runtime_error(std::string(what) + ": missing key '" + r + "'");
}

inline json load_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  return json::parse(f);  // parse errors carry the byte offset in what()
}

inline void save_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("short write: " + path.string());
}

// --- vectors ---------------------------------------------------------------

inline json to_json(const Vec3<double>& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3<double> vec3_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw std::runtime_error(std::string(what) + ": expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// --- cameras ---------------------------------------------------------------

inline json camera_to_json(const CameraPose& cam) {
  json j;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  json rot = json::array();
  for (double v : cam.rotation.m) rot.push_back(v);
  j["rotation"] = rot;  // row-major, world -> camera
  j["translation"] = to_json(cam.translation);
  return j;
}

inline CameraPose camera_from_json(const json& j) {
  require_keys(j, "camera",
               {"width", "height", "fx", "fy", "cx", "cy", "rotation", "translation"},
               {"width", "height", "fx", "fy", "cx", "cy", "rotation", "translation"});
  CameraPose cam;
  cam.width = j["width"].get<int>();
  cam.height = j["height"].get<int>();
  cam.fx = j["fx"].get<double>();
  cam.fy = j["fy"].get<double>();
  cam.cx = j["cx"].get<double>();
  cam.cy = j["cy"].get<double>();
  const json& rot = j["rotation"];
  if (!rot.is_array() || rot.size() != 9)
    throw std::runtime_error("camera: rotation must be a 9-element row-major array");
  for (int i = 0; i < 9; ++i) cam.rotation.m[size_t(i)] = rot[size_t(i)].get<double>();
  cam.translation = vec3_from_json(j["translation"], "camera translation");
  cam.validate();
  return cam;
}

inline json cameras_to_json(const std::vector<CameraPose>& cams) {
  json arr = json::array();
  for (const auto& c : cams) arr.push_back(camera_to_json(c));
  return arr;
}

inline std::vector<CameraPose> cameras_from_json(const json& arr) {
  if (!arr.is_array()) throw std::runtime_error("cameras.json: expected a JSON array");
  std::vector<CameraPose> cams;
  for (const auto& j : arr) cams.push_back(camera_from_json(j));
  return cams;
}

// --- analytic scenes -------------------------------------------------------

inline json scene_to_json(const AnalyticScene& scene) {
  json j;
  j["light_direction"] = to_json(scene.light_direction);
  json prims = json::array();
  for (const auto& prim : scene.primitives) {
    json p;
    p["albedo"] = to_json(prim.albedo);
    if (const auto* s = std::get_if<SpherePrim>(&prim.shape)) {
      p["shape"] = "sphere";
      p["center"] = to_json(s->center);
      p["radius"] = s->radius;
    } else if (const auto* c = std::get_if<CapsulePrim>(&prim.shape)) {
      p["shape"] = "capsule";
      p["a"] = to_json(c->a);
      p["b"] = to_json(c->b);
      p["radius"] = c->radius;
    } else if (const auto* b = std::get_if<BoxPrim>(&prim.shape)) {
      p["shape"] = "box";
      p["center"] = to_json(b->center);
      p["half_extent"] = to_json(b->half_extent);
      json rot = json::array();
      for (double v : b->rotation.m) rot.push_back(v);
      p["rotation"] = rot;
    }
    prims.push_back(p);
  }
  j["primitives"] = prims;
  return j;
}

inline AnalyticScene scene_from_json(const json& j) {
  require_keys(j, "scene", {"light_direction", "primitives"}, {"primitives"});
  AnalyticScene scene;
  if (j.contains("light_direction")) {
    scene.light_direction = vec3_from_json(j["light_direction"], "light_direction");
    double n = norm(scene.light_direction);
    if (n < 1e-9) throw std::runtime_error("scene: light_direction must be nonzero");
    scene.light_direction = scene.light_direction / n;
  }
  for (const auto& p : j["primitives"]) {
    Primitive prim;
    if (!p.contains("shape")) throw std::runtime_error("scene primitive: missing 'shape'");
    std::string shape = p["shape"].get<std::string>();
    if (p.contains("albedo")) prim.albedo = vec3_from_json(p["albedo"], "albedo");
    if (shape == "sphere") {
      require_keys(p, "sphere", {"shape", "center", "radius", "albedo"}, {"center", "radius"});
      prim.shape = SpherePrim{vec3_from_json(p["center"], "center"), p["radius"].get<double>()};
    } else if (shape == "capsule") {
      require_keys(p, "capsule", {"shape", "a", "b", "radius", "albedo"}, {"a", "b", "radius"});
      prim.shape = CapsulePrim{vec3_from_json(p["a"], "a"), vec3_from_json(p["b"], "b"),
                               p["radius"].get<double>()};
    } else if (shape == "box") {
      require_keys(p, "box", {"shape", "center", "half_extent", "rotation", "albedo"},
                   {"center", "half_extent"});
      BoxPrim box;
      box.center = vec3_from_json(p["center"], "center");
      box.half_extent = vec3_from_json(p["half_extent"], "half_extent");
      if (p.contains("rotation")) {
        const json& rot = p["rotation"];
        if (!rot.is_array() || rot.size() != 9)
          throw std::runtime_error("box rotation must be a 9-element array");
        for (int i = 0; i < 9; ++i) box.rotation.m[size_t(i)] = rot[size_t(i)].get<double>();
      }
      prim.shape = box;
    } else {
      throw std::runtime_error("scene primitive: unknown shape '" + shape + "'");
    }
    scene.primitives.push_back(prim);
  }
  scene.validate();

  Vec3<double> lo, hi;
  scene_bounds(scene, lo, hi);
  if (lo.x < -1 || lo.y < -1 || lo.z < -1 || hi.x > 1 || hi.y > 1 || hi.z > 1)
    throw std::runtime_error("scene does not fit inside the [-1,1]^3 object box");
  return scene;
}

// FNV-1a over bytes; the pipeline's non-cryptographic content hash.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string hash_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof buf);
    h = fnv1a(buf, size_t(f.gcount()), h);
  }
  return hex64(h);
}

inline std::string hash_json(const json& j) {
  std::string s = j.dump();
  return hex64(fnv1a(s.data(), s.size()));
}

}  // namespace tpsdf

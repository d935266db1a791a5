#pragma once

// Built-in analytic scenes. The capsule-human preset is a 9-capsule stick
// figure whose bounding box has its longest side (height) exactly 1.8,
// matching the normalization the datasets use.

#include "tpsdf/analytic.hpp"

namespace tpsdf {

inline AnalyticScene preset_sphere() {
  AnalyticScene scene;
  scene.primitives.push_back({SpherePrim{{0, 0, 0}, 0.5}, {0.82, 0.34, 0.26}});
  return scene;
}

inline AnalyticScene preset_capsule_human() {
  AnalyticScene scene;
  const Vec3<double> skin{0.87, 0.64, 0.48};
  const Vec3<double> shirt{0.24, 0.38, 0.72};
  const Vec3<double> pants{0.28, 0.24, 0.34};

  auto cap = [](Vec3<double> a, Vec3<double> b, double r, Vec3<double> albedo) {
    return Primitive{CapsulePrim{a, b, r}, albedo};
  };

  // Height spans y in [-0.9, 0.9]: head top 0.76+0.14, foot bottom -0.82-0.08.
  scene.primitives.push_back(cap({0, 0.62, 0}, {0, 0.76, 0}, 0.14, skin));          // head
  scene.primitives.push_back(cap({0, 0.12, 0}, {0, 0.50, 0}, 0.16, shirt));         // torso
  scene.primitives.push_back(cap({-0.06, 0.0, 0}, {0.06, 0.0, 0}, 0.14, pants));    // pelvis
  scene.primitives.push_back(cap({-0.17, 0.46, 0.02}, {-0.34, 0.27, 0.05}, 0.06, shirt));
  scene.primitives.push_back(cap({0.17, 0.46, 0.02}, {0.34, 0.27, 0.05}, 0.06, shirt));
  scene.primitives.push_back(cap({-0.34, 0.25, 0.05}, {-0.43, 0.05, 0.10}, 0.05, skin));
  scene.primitives.push_back(cap({0.34, 0.25, 0.05}, {0.43, 0.05, 0.10}, 0.05, skin));
  scene.primitives.push_back(cap({-0.09, -0.08, 0}, {-0.14, -0.82, 0}, 0.08, pants));
  scene.primitives.push_back(cap({0.09, -0.08, 0}, {0.14, -0.82, 0}, 0.08, pants));
  return scene;
}

inline AnalyticScene scene_from_preset(const std::string& name) {
  if (name == "sphere") return preset_sphere();
  if (name == "capsule-human") return preset_capsule_human();
  throw std::invalid_argument("unknown scene preset '" + name + "' (sphere | capsule-human)");
}

// Radius of the bounding sphere used for framing cameras.
inline double scene_bounding_radius(const AnalyticScene& scene) {
  Vec3<double> lo, hi;
  scene_bounds(scene, lo, hi);
  double r = 0;
  for (auto& corner : {lo, hi}) r = std::max(r, norm(corner));
  return r;
}

// Focal length such that the scene's bounding sphere fills `fill` of the
// half-image at the rig distance.
inline double framing_focal(double cam_radius, double bounding_radius, int width,
                            double fill = 0.42) {
  return fill * (width * 0.5) * cam_radius / bounding_radius;
}

}  // namespace tpsdf

#pragma once

// Analytic SDF scenes: the ground-truth generator and the independent
// oracle the learned field is verified against. Union distance is the min
// over primitives, which for overlapping shapes is a lower bound of the
// true union distance; every consumer (sphere tracer, marching cubes)
// works on that same field, so the oracles stay self-consistent.

#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "tpsdf/camera.hpp"
#include "tpsdf/image.hpp"
#include "tpsdf/math.hpp"
#include "tpsdf/parallel.hpp"

namespace tpsdf {

struct SpherePrim {
  Vec3<double> center;
  double radius = 0.5;
};

struct CapsulePrim {
  Vec3<double> a, b;
  double radius = 0.1;
};

struct BoxPrim {
  Vec3<double> center;
  Vec3<double> half_extent;
  Mat3<double> rotation;  // world -> box frame
};

struct Primitive {
  std::variant<SpherePrim, CapsulePrim, BoxPrim> shape;
  Vec3<double> albedo{0.8, 0.8, 0.8};
};

struct AnalyticScene {
  std::vector<Primitive> primitives;
  Vec3<double> light_direction{0.48666426339228763, 0.81110710565381272, 0.32444284226152509};

  void validate() const {
    if (primitives.empty()) throw std::invalid_argument("analytic scene needs at least one primitive");
  }
};

inline double sdf_eval(const SpherePrim& s, const Vec3<double>& p) {
  return norm(p - s.center) - s.radius;
}

inline double sdf_eval(const CapsulePrim& c, const Vec3<double>& p) {
  Vec3<double> ab = c.b - c.a;
  double denom = dot(ab, ab);
  double t = denom > 0 ? clamp(dot(p - c.a, ab) / denom, 0.0, 1.0) : 0.0;
  return norm(p - (c.a + ab * t)) - c.radius;
}

inline double sdf_eval(const BoxPrim& b, const Vec3<double>& p) {
  Vec3<double> q = b.rotation * (p - b.center);
  Vec3<double> d{std::abs(q.x) - b.half_extent.x, std::abs(q.y) - b.half_extent.y,
                 std::abs(q.z) - b.half_extent.z};
  Vec3<double> dpos = cwise_max(d, Vec3<double>{0, 0, 0});
  double inside = std::min(std::max(d.x, std::max(d.y, d.z)), 0.0);
  return norm(dpos) + inside;
}

inline double sdf_eval(const Primitive& prim, const Vec3<double>& p) {
  return std::visit([&](const auto& s) { return sdf_eval(s, p); }, prim.shape);
}

inline double sdf_eval(const AnalyticScene& scene, const Vec3<double>& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& prim : scene.primitives) best = std::min(best, sdf_eval(prim, p));
  return best;
}

inline const Primitive& nearest_primitive(const AnalyticScene& scene, const Vec3<double>& p) {
  const Primitive* best = &scene.primitives.front();
  double bd = std::numeric_limits<double>::infinity();
  for (const auto& prim : scene.primitives) {
    double d = sdf_eval(prim, p);
    if (d < bd) {
      bd = d;
      best = &prim;
    }
  }
  return *best;
}

// Central-difference gradient of the scene SDF.
inline Vec3<double> scene_gradient(const AnalyticScene& scene, const Vec3<double>& p,
                                   double eps = 1e-5) {
  Vec3<double> g;
  for (int a = 0; a < 3; ++a) {
    Vec3<double> hi = p, lo = p;
    hi[a] += eps;
    lo[a] -= eps;
    g[a] = (sdf_eval(scene, hi) - sdf_eval(scene, lo)) / (2 * eps);
  }
  return g;
}

inline Vec3<double> scene_normal(const AnalyticScene& scene, const Vec3<double>& p) {
  Vec3<double> g = scene_gradient(scene, p);
  double n = norm(g);
  if (n < 1e-12) return {0, 0, 1};
  return g / n;
}

// Axis-aligned bounds of the scene, from primitive bounds (exact for
// spheres/capsules, conservative for rotated boxes).
inline void scene_bounds(const AnalyticScene& scene, Vec3<double>& lo, Vec3<double>& hi) {
  lo = {1e30, 1e30, 1e30};
  hi = {-1e30, -1e30, -1e30};
  for (const auto& prim : scene.primitives) {
    if (const auto* s = std::get_if<SpherePrim>(&prim.shape)) {
      Vec3<double> r{s->radius, s->radius, s->radius};
      lo = cwise_min(lo, s->center - r);
      hi = cwise_max(hi, s->center + r);
    } else if (const auto* c = std::get_if<CapsulePrim>(&prim.shape)) {
      Vec3<double> r{c->radius, c->radius, c->radius};
      lo = cwise_min(lo, cwise_min(c->a, c->b) - r);
      hi = cwise_max(hi, cwise_max(c->a, c->b) + r);
    } else if (const auto* b = std::get_if<BoxPrim>(&prim.shape)) {
      // Bound of a rotated box: project the half-extents onto world axes.
      Mat3<double> rt = b->rotation.transposed();
      Vec3<double> r{0, 0, 0};
      for (int a = 0; a < 3; ++a)
        r[a] = std::abs(rt(a, 0)) * b->half_extent.x + std::abs(rt(a, 1)) * b->half_extent.y +
               std::abs(rt(a, 2)) * b->half_extent.z;
      lo = cwise_min(lo, b->center - r);
      hi = cwise_max(hi, b->center + r);
    }
  }
}

struct SphereTraceHit {
  bool hit = false;
  double t = 0;
  Vec3<double> point;
  Vec3<double> normal;
  Vec3<double> albedo;
};

// Sphere tracing: steps by the SDF value, converges when |sdf| < 1e-5 or
// gives up after 256 iterations; misses are declared past the box exit.
inline SphereTraceHit sphere_trace(const AnalyticScene& scene, const Ray& ray,
                                   double tol = 1e-5, int max_iters = 256) {
  SphereTraceHit out;
  double t_near, t_far;
  if (!ray_aabb(ray, t_near, t_far)) return out;
  double t = t_near;
  for (int i = 0; i < max_iters; ++i) {
    Vec3<double> p = ray.origin + ray.direction * t;
    double d = sdf_eval(scene, p);
    if (std::abs(d) < tol) {
      out.hit = true;
      out.t = t;
      out.point = p;
      out.normal = scene_normal(scene, p);
      out.albedo = nearest_primitive(scene, p).albedo;
      return out;
    }
    t += d;
    if (t > t_far + tol) return out;
  }
  return out;
}

// Lambertian shading with a fixed directional light plus 0.2 ambient.
inline Vec3<double> shade(const Vec3<double>& albedo, const Vec3<double>& normal,
                          const Vec3<double>& light_direction) {
  double lambert = std::max(0.0, dot(normal, light_direction));
  return albedo * (0.8 * lambert + 0.2);
}

// One rendered view plus its supervision maps. depth is camera-space
// distance along the ray, 0 at background; normals are world-frame unit
// vectors, zero at background; mask true <=> depth > 0.
struct ViewBundle {
  ImageF rgb;     // HxWx3 in [0,1]
  ImageF depth;   // HxWx1
  ImageF normal;  // HxWx3
  Image<uint8_t> mask;  // HxWx1, 0/255
  CameraPose camera;

  bool has_depth = true;
  bool has_normal = true;
};

inline ViewBundle render_ground_truth(const AnalyticScene& scene, const CameraPose& camera) {
  ViewBundle vb;
  vb.camera = camera;
  vb.rgb = ImageF(camera.width, camera.height, 3, 1.0f);  // white background
  vb.depth = ImageF(camera.width, camera.height, 1, 0.0f);
  vb.normal = ImageF(camera.width, camera.height, 3, 0.0f);
  vb.mask = Image<uint8_t>(camera.width, camera.height, 1, 0);

  parallel_for(int64_t(camera.width) * camera.height, [&](int64_t idx) {
    int x = int(idx % camera.width), y = int(idx / camera.width);
    Ray ray = generate_ray(camera, x + 0.5, y + 0.5);
    SphereTraceHit hit = sphere_trace(scene, ray);
    if (!hit.hit) return;
    Vec3<double> c = shade(hit.albedo, hit.normal, scene.light_direction);
    for (int ch = 0; ch < 3; ++ch) vb.rgb.at(x, y, ch) = float(clamp(c[ch], 0.0, 1.0));
    vb.depth.at(x, y, 0) = float(hit.t);
    for (int ch = 0; ch < 3; ++ch) vb.normal.at(x, y, ch) = float(hit.normal[ch]);
    vb.mask.at(x, y, 0) = 255;
  });
  return vb;
}

}  // namespace tpsdf

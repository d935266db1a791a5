#pragma once

// Pinhole cameras and ray generation. Convention: OpenCV-style world-to-
// camera rotation (rows = camera basis), +z looking forward, +y down in the
// image, pixel (i,j) centered at (i+0.5, j+0.5).

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tpsdf/math.hpp"

namespace tpsdf {

struct Ray {
  Vec3<double> origin;
  Vec3<double> direction;  // unit
};

struct CameraPose {
  Mat3<double> rotation;     // world -> camera
  Vec3<double> translation;  // x_cam = R * x_world + t
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Vec3<double> position() const { return -(rotation.transposed() * translation); }
  Vec3<double> optical_axis() const { return rotation.row(2); }

  void validate() const {
    if (orthonormality_error(rotation) > 1e-6)
      throw std::invalid_argument("camera rotation is not orthonormal (det +1) within 1e-6");
    if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera image size must be positive");
    if (cx < 0 || cx > width || cy < 0 || cy > height)
      throw std::invalid_argument("principal point outside image");
  }
};

// Ray through sub-pixel coordinate (px, py). Out-of-bounds pixels are a
// caller error, not a clamp.
inline Ray generate_ray(const CameraPose& cam, double px, double py) {
  if (px < 0 || px > cam.width || py < 0 || py > cam.height)
    throw std::out_of_range("pixel coordinate outside image bounds");
  Vec3<double> dir_cam{(px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0};
  Vec3<double> dir_world = cam.rotation.transposed() * dir_cam;
  return Ray{cam.position(), normalized(dir_world)};
}

// Projects a world point; returns false when the point is behind the camera.
inline bool project_point(const CameraPose& cam, const Vec3<double>& p, double& px, double& py) {
  Vec3<double> pc = cam.rotation * p + cam.translation;
  if (pc.z <= 0) return false;
  px = cam.fx * pc.x / pc.z + cam.cx;
  py = cam.fy * pc.y / pc.z + cam.cy;
  return true;
}

inline CameraPose look_at_camera(const Vec3<double>& eye, const Vec3<double>& target,
                                 double fx, double fy, int width, int height) {
  Vec3<double> forward = target - eye;
  double fl = norm(forward);
  if (fl < 1e-12) throw std::invalid_argument("look_at: eye coincides with target");
  forward = forward / fl;
  Vec3<double> up{0, 1, 0};
  Vec3<double> right = cross(forward, up);
  double rl = norm(right);
  if (rl < 1e-9) {
    // Looking straight up/down the y axis; fall back to x as the up hint.
    up = {1, 0, 0};
    right = cross(forward, up);
    rl = norm(right);
  }
  right = right / rl;
  Vec3<double> down = cross(forward, right);  // +y in image space
  CameraPose cam;
  cam.rotation = Mat3<double>::from_rows(right, down, forward);
  cam.translation = -(cam.rotation * eye);
  cam.fx = fx;
  cam.fy = fy;
  cam.width = width;
  cam.height = height;
  cam.cx = width * 0.5;
  cam.cy = height * 0.5;
  return cam;
}

// Ring of cameras at azimuths 2*pi*k/n, all looking at the origin. The rig
// must sit outside the [-1,1]^3 object box, hence radius > sqrt(3).
inline std::vector<CameraPose> make_orbit_cameras(int n, double radius, double elevation,
                                                  double fx, double fy, int width, int height,
                                                  double azimuth_offset = 0.0) {
  if (n < 1) throw std::invalid_argument("orbit camera count must be >= 1");
  if (!(radius > std::sqrt(3.0)))
    throw std::invalid_argument("orbit radius must exceed sqrt(3) (outside the object box)");
  std::vector<CameraPose> cams;
  cams.reserve(size_t(n));
  for (int k = 0; k < n; ++k) {
    double az = 2.0 * kPi * k / n + azimuth_offset;
    Vec3<double> eye{radius * std::cos(elevation) * std::cos(az),
                     radius * std::sin(elevation),
                     radius * std::cos(elevation) * std::sin(az)};
    cams.push_back(look_at_camera(eye, {0, 0, 0}, fx, fy, width, height));
  }
  return cams;
}

// Slab test against the object bounding box [-1,1]^3, results clamped to
// t >= 0. Returns false on miss.
inline bool ray_aabb(const Ray& ray, double& t_near, double& t_far) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    double o = ray.origin[a], d = ray.direction[a];
    if (std::abs(d) < 1e-300) {
      if (o < -1.0 || o > 1.0) return false;
      continue;
    }
    double inv = 1.0 / d;
    double ta = (-1.0 - o) * inv;
    double tb = (1.0 - o) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return false;
  }
  t_near = t0;
  t_far = t1;
  return true;
}

}  // namespace tpsdf

#pragma once

// Small vector/matrix types for scene geometry. Heavier batched linear
// algebra (MLP evaluation) goes through Eigen; these types stay POD so
// they can be shuffled through flat arrays freely.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace tpsdf {

template <typename T>
struct Vec3 {
  T x = 0, y = 0, z = 0;

  constexpr Vec3() = default;
  constexpr Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(T s) { x *= s; y *= s; z *= s; return *this; }

  T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  T operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

template <typename T>
constexpr Vec3<T> operator*(T s, const Vec3<T>& v) { return v * s; }

template <typename T>
constexpr T dot(const Vec3<T>& a, const Vec3<T>& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

template <typename T>
constexpr Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <typename T>
T norm(const Vec3<T>& v) { return std::sqrt(dot(v, v)); }

template <typename T>
Vec3<T> normalized(const Vec3<T>& v) {
  T n = norm(v);
  return v / n;
}

template <typename T>
constexpr Vec3<T> cwise_min(const Vec3<T>& a, const Vec3<T>& b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}

template <typename T>
constexpr Vec3<T> cwise_max(const Vec3<T>& a, const Vec3<T>& b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

template <typename T>
bool all_finite(const Vec3<T>& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// Row-major 3x3 matrix. Rows are the camera basis vectors when used as a
// world-to-camera rotation.
template <typename T>
struct Mat3 {
  std::array<T, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }

  static Mat3 from_rows(const Vec3<T>& r0, const Vec3<T>& r1, const Vec3<T>& r2) {
    Mat3 out;
    out.m = {r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z};
    return out;
  }

  T operator()(int r, int c) const { return m[size_t(3 * r + c)]; }
  T& operator()(int r, int c) { return m[size_t(3 * r + c)]; }

  Vec3<T> row(int r) const { return {m[size_t(3 * r)], m[size_t(3 * r + 1)], m[size_t(3 * r + 2)]}; }
  Vec3<T> col(int c) const { return {m[size_t(c)], m[size_t(3 + c)], m[size_t(6 + c)]}; }

  Vec3<T> operator*(const Vec3<T>& v) const {
    return {dot(row(0), v), dot(row(1), v), dot(row(2), v)};
  }

  Mat3 transposed() const {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out(r, c) = (*this)(c, r);
    return out;
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out(r, c) = dot(row(r), o.col(c));
    return out;
  }

  T det() const {
    return dot(row(0), cross(row(1), row(2)));
  }
};

// Max deviation of R*R^T from identity plus the determinant error; used to
// validate camera rotations (tolerance 1e-6 per contract).
template <typename T>
T orthonormality_error(const Mat3<T>& r) {
  Mat3<T> g = r * r.transposed();
  T err = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) err = std::max(err, std::abs(g(i, j) - (i == j ? T(1) : T(0))));
  return std::max(err, std::abs(r.det() - T(1)));
}

template <typename T>
constexpr T clamp(T v, T lo, T hi) { return v < lo ? lo : (v > hi ? hi : v); }

template <typename T>
constexpr T sqr(T v) { return v * v; }

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace tpsdf

#pragma once

// Counter-based RNG. Every random draw in the project derives from a root
// seed plus a list of stream tags (stage name, iteration, pixel index, ...),
// so any stage can be re-run in isolation and parallel schedules cannot
// change the sampled values.

#include <cmath>
#include <cstdint>
#include <string_view>

#include "tpsdf/math.hpp"

namespace tpsdf {

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t h, uint64_t v) {
  return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
}

inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (char c : s) {
    h ^= uint64_t(uint8_t(c));
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

class Rng {
 public:
  Rng() : key_(0) {}
  explicit Rng(uint64_t seed) : key_(detail::splitmix64(seed)) {}

  // Derive a sub-stream; tags may be integers or string literals.
  template <typename... Tags>
  Rng stream(Tags... tags) const {
    uint64_t h = key_;
    ((h = detail::hash_combine(h, tag_value(tags))), ...);
    Rng out;
    out.key_ = h;
    return out;
  }

  uint64_t next_u64() {
    return detail::splitmix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ull);
  }

  uint32_t next_u32() { return uint32_t(next_u64() >> 32); }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) { return n ? next_u64() % n : 0; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  Vec3<double> in_unit_box() {
    double x = uniform(-1.0, 1.0), y = uniform(-1.0, 1.0), z = uniform(-1.0, 1.0);
    return {x, y, z};
  }

  Vec3<double> unit_vector() {
    while (true) {
      Vec3<double> v = in_unit_box();
      double n2 = dot(v, v);
      if (n2 > 1e-8 && n2 <= 1.0) return v / std::sqrt(n2);
    }
  }

 private:
  static uint64_t tag_value(uint64_t v) { return v; }
  static uint64_t tag_value(int64_t v) { return uint64_t(v); }
  static uint64_t tag_value(int v) { return uint64_t(int64_t(v)); }
  static uint64_t tag_value(unsigned v) { return v; }
  static uint64_t tag_value(std::string_view s) { return detail::hash_str(s); }
  static uint64_t tag_value(const char* s) { return detail::hash_str(s); }

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
  double spare_ = 0;
  bool have_spare_ = false;
};

}  // namespace tpsdf

#pragma once

#include <cmath>
#include <optional>

namespace minidrive {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {x * k, y * k}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  bool operator==(const Vec2&) const = default;

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double norm2() const { return x * x + y * y; }
  Vec2 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
  }
  // Left-hand normal (counterclockwise quarter turn).
  Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double k, Vec2 v) { return v * k; }

inline Vec2 unit_from_angle(double a) { return {std::cos(a), std::sin(a)}; }

// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  a = std::fmod(a, two_pi);
  if (a <= -3.14159265358979323846) a += two_pi;
  if (a > 3.14159265358979323846) a -= two_pi;
  return a;
}

// Distance from p to segment [a,b]; t_out receives the clamped projection
// parameter in [0,1].
inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b, double* t_out = nullptr) {
  const Vec2 ab = b - a;
  const double len2 = ab.norm2();
  double t = 0.0;
  if (len2 > 0.0) {
    t = (p - a).dot(ab) / len2;
    t = std::fmax(0.0, std::fmin(1.0, t));
  }
  if (t_out) *t_out = t;
  return (p - (a + ab * t)).norm();
}

// Parametric ray/segment intersection. Returns the ray parameter t >= 0
// (distance when dir is unit length), or nothing if they miss.
inline std::optional<double> ray_segment_intersection(Vec2 origin, Vec2 dir, Vec2 a, Vec2 b) {
  const Vec2 e = b - a;
  const double denom = dir.cross(e);
  if (std::fabs(denom) < 1e-15) return std::nullopt;  // parallel
  const Vec2 ao = a - origin;
  const double t = ao.cross(e) / denom;       // along ray
  const double u = ao.cross(dir) / denom;     // along segment
  if (t < 0.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

// Proper/improper intersection test for segments [a1,a2] and [b1,b2].
inline bool segments_intersect(Vec2 a1, Vec2 a2, Vec2 b1, Vec2 b2) {
  const auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
    const double v = (q - p).cross(r - p);
    if (v > 1e-12) return 1;
    if (v < -1e-12) return -1;
    return 0;
  };
  const int o1 = orient(a1, a2, b1);
  const int o2 = orient(a1, a2, b2);
  const int o3 = orient(b1, b2, a1);
  const int o4 = orient(b1, b2, a2);
  if (o1 != o2 && o3 != o4) return true;
  const auto on_seg = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::fmin(p.x, r.x) - 1e-12 <= q.x && q.x <= std::fmax(p.x, r.x) + 1e-12 &&
           std::fmin(p.y, r.y) - 1e-12 <= q.y && q.y <= std::fmax(p.y, r.y) + 1e-12;
  };
  if (o1 == 0 && on_seg(a1, b1, a2)) return true;
  if (o2 == 0 && on_seg(a1, b2, a2)) return true;
  if (o3 == 0 && on_seg(b1, a1, b2)) return true;
  if (o4 == 0 && on_seg(b1, a2, b2)) return true;
  return false;
}

}  // namespace minidrive

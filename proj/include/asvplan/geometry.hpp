#pragma once
#include <cmath>

namespace asvplan {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kRadToDeg = 180.0 / kPi;

struct Vec2 {
  double x{}, y{};

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
};

inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

// z-component of the 3-D cross product; positive = counter-clockwise
// rotation from a to b in the ENU plane (x east, y north).
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double norm_sq(Vec2 v) { return v.x * v.x + v.y * v.y; }
inline double distance(Vec2 a, Vec2 b) { return norm(b - a); }

// Maritime heading convention: degrees clockwise from north, ENU frame.
// heading 0 -> due north (0,1), heading 90 -> due east (1,0).
inline Vec2 heading_to_unit(double heading_deg) {
  const double r = heading_deg * kDegToRad;
  return {std::sin(r), std::cos(r)};
}

// Bearing of a displacement vector, clockwise from north in [0, 360).
inline double bearing_deg(Vec2 v) {
  double b = std::atan2(v.x, v.y) * kRadToDeg;
  if (b < 0.0) b += 360.0;
  if (b >= 360.0) b = 0.0;
  return b;
}

inline double wrap360(double deg) {
  double d = std::fmod(deg, 360.0);
  if (d < 0.0) d += 360.0;
  if (d >= 360.0) d = 0.0;  // fmod can return 360 - eps rounding up
  return d;
}

// Signed smallest difference a - b in (-180, 180].
inline double wrap180(double deg) {
  double d = std::fmod(deg, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

inline double clamp(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace asvplan

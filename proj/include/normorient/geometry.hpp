#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <utility>

namespace normorient {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

// Index of the component with the largest magnitude; ties go to the lower index.
inline int dominant_axis(const Vec3& v) {
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  return best;
}

// +1 when the dominant component of v is positive. Negating v always negates
// the result (for nonzero v), which makes it usable as a sign-blind key.
inline int canonical_sign(const Vec3& v) { return v[dominant_axis(v)] > 0.0 ? 1 : -1; }

inline Vec3 canonicalize(const Vec3& v) { return canonical_sign(v) > 0 ? Vec3(v) : Vec3(-v); }

// Branchless orthonormal basis around a unit vector.
inline void orthonormal_basis(const Vec3& n, Vec3& t, Vec3& b) {
  const double sign = std::copysign(1.0, n.z());
  const double a = -1.0 / (sign + n.z());
  const double c = n.x() * n.y() * a;
  t = Vec3(1.0 + sign * n.x() * n.x() * a, sign * c, -sign * n.x());
  b = Vec3(c, sign + n.y() * n.y() * a, -n.y());
}

/// In-plane frame used everywhere a plane needs 2D coordinates: u is the
/// normalized projection of the global axis least aligned with the normal,
/// v = normal x u.
inline std::pair<Vec3, Vec3> plane_frame(const Vec3& normal) {
  int least = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(normal[i]) < std::abs(normal[least])) least = i;
  }
  Vec3 axis = Vec3::Zero();
  axis[least] = 1.0;
  Vec3 u = (axis - axis.dot(normal) * normal).normalized();
  Vec3 v = normal.cross(u);
  return {u, v};
}

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& o) {
    lo = lo.cwiseMin(o.lo);
    hi = hi.cwiseMax(o.hi);
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
};

}  // namespace normorient

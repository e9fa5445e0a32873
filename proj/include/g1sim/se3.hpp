#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace g1sim {

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  constexpr double squared_norm() const { return dot(*this); }
  double norm() const { return std::sqrt(squared_norm()); }
  Vec3 normalized() const {
    const double n = norm();
    if (n < 1e-15) throw std::invalid_argument("Vec3::normalized: zero vector");
    return *this / n;
  }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline Vec3 lerp(const Vec3& a, const Vec3& b, double t) { return a + (b - a) * t; }

/// Unit quaternion, stored (w, x, y, z). Every constructor normalizes, so a
/// Quat is always within 1e-9 of unit norm and q / -q represent the same
/// rotation.
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  Quat() = default;
  Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {
    normalize_in_place();
  }

  static Quat identity() { return {}; }

  static Quat from_axis_angle(const Vec3& axis, double angle_rad) {
    const Vec3 a = axis.normalized();
    const double h = 0.5 * angle_rad;
    const double s = std::sin(h);
    return {std::cos(h), a.x * s, a.y * s, a.z * s};
  }

  /// exp map: v = angle * unit_axis (radians).
  static Quat from_rotation_vector(const Vec3& v) {
    const double angle = v.norm();
    if (angle < 1e-12) {
      // first-order expansion keeps tiny rotations exact to double precision
      return {1.0, 0.5 * v.x, 0.5 * v.y, 0.5 * v.z};
    }
    return from_axis_angle(v, angle);
  }

  /// Columns of a rotation matrix (must be orthonormal, right-handed).
  static Quat from_columns(const Vec3& cx, const Vec3& cy, const Vec3& cz) {
    // Shepperd's method on the 3x3 matrix [cx cy cz]
    const double m00 = cx.x, m01 = cy.x, m02 = cz.x;
    const double m10 = cx.y, m11 = cy.y, m12 = cz.y;
    const double m20 = cx.z, m21 = cy.z, m22 = cz.z;
    const double tr = m00 + m11 + m22;
    double qw, qx, qy, qz;
    if (tr > 0.0) {
      const double s = std::sqrt(tr + 1.0) * 2.0;
      qw = 0.25 * s;
      qx = (m21 - m12) / s;
      qy = (m02 - m20) / s;
      qz = (m10 - m01) / s;
    } else if (m00 > m11 && m00 > m22) {
      const double s = std::sqrt(1.0 + m00 - m11 - m22) * 2.0;
      qw = (m21 - m12) / s;
      qx = 0.25 * s;
      qy = (m01 + m10) / s;
      qz = (m02 + m20) / s;
    } else if (m11 > m22) {
      const double s = std::sqrt(1.0 + m11 - m00 - m22) * 2.0;
      qw = (m02 - m20) / s;
      qx = (m01 + m10) / s;
      qy = 0.25 * s;
      qz = (m12 + m21) / s;
    } else {
      const double s = std::sqrt(1.0 + m22 - m00 - m11) * 2.0;
      qw = (m10 - m01) / s;
      qx = (m02 + m20) / s;
      qy = (m12 + m21) / s;
      qz = 0.25 * s;
    }
    return {qw, qx, qy, qz};
  }

  Quat conjugate() const {
    Quat q;
    q.w = w; q.x = -x; q.y = -y; q.z = -z;
    return q;
  }
  Quat inverse() const { return conjugate(); }  // unit quaternion

  Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }

  Vec3 rotate(const Vec3& v) const {
    // v' = v + 2w(u x v) + 2(u x (u x v)) with u = (x,y,z)
    const Vec3 u{x, y, z};
    const Vec3 t = u.cross(v) * 2.0;
    return v + t * w + u.cross(t);
  }

  double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }

  /// log map: angle * unit_axis with angle in [0, pi] (shortest arc).
  Vec3 to_rotation_vector() const {
    double qw = w, qx = x, qy = y, qz = z;
    if (qw < 0.0) { qw = -qw; qx = -qx; qy = -qy; qz = -qz; }
    const Vec3 v{qx, qy, qz};
    const double vn = v.norm();
    if (vn < 1e-12) return v * 2.0;  // small-angle limit
    const double angle = 2.0 * std::atan2(vn, qw);
    return v * (angle / vn);
  }

  /// Rotation matrix columns (world images of the body axes).
  std::array<Vec3, 3> columns() const {
    return {rotate({1, 0, 0}), rotate({0, 1, 0}), rotate({0, 0, 1})};
  }

  /// Shortest-arc spherical interpolation; t in [0, 1].
  static Quat slerp_shortest(const Quat& a, Quat b, double t) {
    double d = a.dot(b);
    if (d < 0.0) { b.w = -b.w; b.x = -b.x; b.y = -b.y; b.z = -b.z; d = -d; }
    if (d > 0.9995) {
      return {a.w + (b.w - a.w) * t, a.x + (b.x - a.x) * t,
              a.y + (b.y - a.y) * t, a.z + (b.z - a.z) * t};
    }
    const double omega = std::acos(std::clamp(d, -1.0, 1.0));
    const double so = std::sin(omega);
    const double ka = std::sin((1.0 - t) * omega) / so;
    const double kb = std::sin(t * omega) / so;
    return {ka * a.w + kb * b.w, ka * a.x + kb * b.x,
            ka * a.y + kb * b.y, ka * a.z + kb * b.z};
  }

 private:
  void normalize_in_place() {
    const double n = norm();
    if (!(n > 1e-12) || !std::isfinite(n)) {
      throw std::invalid_argument("Quat: degenerate (zero or non-finite) quaternion");
    }
    w /= n; x /= n; y /= n; z /= n;
  }
};

/// Rigid transform: position in meters plus unit orientation quaternion.
struct Pose {
  Vec3 position;
  Quat orientation;

  static Pose identity() { return {}; }

  /// SE(3) composition a * b (apply b, then a).
  Pose operator*(const Pose& o) const {
    return {position + orientation.rotate(o.position), orientation * o.orientation};
  }

  Pose inverse() const {
    const Quat qi = orientation.inverse();
    return {-qi.rotate(position), qi};
  }

  Vec3 transform_point(const Vec3& p) const { return position + orientation.rotate(p); }

  bool valid() const { return position.finite(); }
};

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }

/// Translation/rotation change between two poses: meters and degrees.
struct PoseDelta {
  double d_pos = 0.0;      // Euclidean norm of translation change, meters
  double d_rot_deg = 0.0;  // geodesic rotation change, degrees, in [0, 180]
};

/// Geodesic rotation distance in degrees: 2*acos(|<q1,q2>|), in [0, 180].
/// Computed from the relative quaternion via atan2 so it agrees with
/// to_rotation_vector() to machine precision near zero.
inline double geodesic_deg(const Quat& q1, const Quat& q2) {
  const Quat rel = q1.conjugate() * q2;
  const double vn = std::sqrt(rel.x * rel.x + rel.y * rel.y + rel.z * rel.z);
  const double angle = 2.0 * std::atan2(vn, std::abs(rel.w));
  return rad_to_deg(angle);
}

inline PoseDelta pose_delta(const Pose& prev, const Pose& cur) {
  return {(cur.position - prev.position).norm(),
          geodesic_deg(prev.orientation, cur.orientation)};
}

/// Axis-angle vector (radians) of the rotation from `reference` to `q`,
/// expressed in the reference body frame. Norm equals the geodesic angle.
inline Vec3 rotation_vector_in_frame(const Quat& reference, const Quat& q) {
  return (reference.inverse() * q).to_rotation_vector();
}

}  // namespace g1sim

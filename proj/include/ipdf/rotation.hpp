#pragma once

// SO(3) algebra on unit quaternions with 3x3 matrix views.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include "ipdf/binary_io.hpp"
#include "ipdf/errors.hpp"
#include "ipdf/random.hpp"

namespace ipdf {

using Eigen::Matrix3d;
using Eigen::Vector3d;

inline constexpr double kPi = std::numbers::pi;

// A rotation stored as a canonical unit quaternion (w, x, y, z): norm 1 and
// w >= 0, or w == 0 with the first nonzero component positive. Since q and -q
// are the same rotation, equality of canonical quaternions is equality of
// rotations (up to rounding).
class Rotation {
 public:
  Rotation() = default;

  // Normalizes and canonicalizes. A zero quaternion is rejected.
  Rotation(double w, double x, double y, double z) : q_{w, x, y, z} { normalize(); }

  static Rotation identity() { return {}; }

  // Keeps the given components bit for bit when they already form a unit
  // quaternion (as when reading back a stored rotation).
  static Rotation from_stored(double w, double x, double y, double z) {
    Rotation r;
    r.q_ = {w, x, y, z};
    const double n2 = w * w + x * x + y * y + z * z;
    if (std::abs(n2 - 1.0) > 1e-12) r.normalize();
    else r.canonicalize_sign();
    return r;
  }

  static Rotation from_axis_angle(const Vector3d& axis, double angle) {
    const double n = axis.norm();
    if (n == 0.0) return identity();
    const Vector3d u = axis / n;
    const double s = std::sin(angle / 2);
    return {std::cos(angle / 2), s * u.x(), s * u.y(), s * u.z()};
  }

  static Rotation rx(double angle) { return from_axis_angle(Vector3d::UnitX(), angle); }
  static Rotation ry(double angle) { return from_axis_angle(Vector3d::UnitY(), angle); }
  static Rotation rz(double angle) { return from_axis_angle(Vector3d::UnitZ(), angle); }

  // Shepperd's method; `m` is assumed orthonormal with det +1 (use
  // project_to_so3 for arbitrary matrices).
  static Rotation from_matrix(const Matrix3d& m) {
    const double tr = m.trace();
    double w, x, y, z;
    if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
      const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 + tr));
      w = s / 4;
      x = (m(2, 1) - m(1, 2)) / s;
      y = (m(0, 2) - m(2, 0)) / s;
      z = (m(1, 0) - m(0, 1)) / s;
    } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
      const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 + m(0, 0) - m(1, 1) - m(2, 2)));
      w = (m(2, 1) - m(1, 2)) / s;
      x = s / 4;
      y = (m(0, 1) + m(1, 0)) / s;
      z = (m(0, 2) + m(2, 0)) / s;
    } else if (m(1, 1) >= m(2, 2)) {
      const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 - m(0, 0) + m(1, 1) - m(2, 2)));
      w = (m(0, 2) - m(2, 0)) / s;
      x = (m(0, 1) + m(1, 0)) / s;
      y = s / 4;
      z = (m(1, 2) + m(2, 1)) / s;
    } else {
      const double s = 2.0 * std::sqrt(std::max(0.0, 1.0 - m(0, 0) - m(1, 1) + m(2, 2)));
      w = (m(1, 0) - m(0, 1)) / s;
      x = (m(0, 2) + m(2, 0)) / s;
      y = (m(1, 2) + m(2, 1)) / s;
      z = s / 4;
    }
    return {w, x, y, z};
  }

  double w() const noexcept { return q_[0]; }
  double x() const noexcept { return q_[1]; }
  double y() const noexcept { return q_[2]; }
  double z() const noexcept { return q_[3]; }
  const std::array<double, 4>& quaternion() const noexcept { return q_; }
  Eigen::Vector4d as_vector() const { return {q_[0], q_[1], q_[2], q_[3]}; }

  Matrix3d matrix() const {
    const double w = q_[0], x = q_[1], y = q_[2], z = q_[3];
    Matrix3d m;
    m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return m;
  }

  Rotation inverse() const { return {q_[0], -q_[1], -q_[2], -q_[3]}; }

  Vector3d apply(const Vector3d& v) const { return matrix() * v; }

  // Rotation angle in [0, pi].
  double angle() const { return 2.0 * std::acos(std::min(1.0, std::abs(q_[0]))); }

  friend bool operator==(const Rotation& a, const Rotation& b) noexcept { return a.q_ == b.q_; }

 private:
  void normalize() {
    const double n = std::sqrt(q_[0] * q_[0] + q_[1] * q_[1] + q_[2] * q_[2] + q_[3] * q_[3]);
    if (!(n > 0.0) || !std::isfinite(n)) throw Error("cannot build a rotation from a zero or non-finite quaternion");
    for (double& c : q_) c /= n;
    canonicalize_sign();
  }

  void canonicalize_sign() {
    bool flip = false;
    for (double c : q_) {
      if (c != 0.0) {
        flip = c < 0.0;
        break;
      }
    }
    if (flip) {
      for (double& c : q_) c = -c;
    }
  }

  std::array<double, 4> q_{1.0, 0.0, 0.0, 0.0};
};

// a∘b: apply b first, then a.
inline Rotation compose(const Rotation& a, const Rotation& b) {
  return {a.w() * b.w() - a.x() * b.x() - a.y() * b.y() - a.z() * b.z(),
          a.w() * b.x() + a.x() * b.w() + a.y() * b.z() - a.z() * b.y(),
          a.w() * b.y() - a.x() * b.z() + a.y() * b.w() + a.z() * b.x(),
          a.w() * b.z() + a.x() * b.y() - a.y() * b.x() + a.z() * b.w()};
}

inline Rotation operator*(const Rotation& a, const Rotation& b) { return compose(a, b); }

inline double abs_quaternion_dot(const Rotation& a, const Rotation& b) noexcept {
  return std::abs(a.w() * b.w() + a.x() * b.x() + a.y() * b.y() + a.z() * b.z());
}

// Angle of a^-1 b, in [0, pi].
inline double geodesic_distance(const Rotation& a, const Rotation& b) {
  const double dot = std::clamp(abs_quaternion_dot(a, b), -1.0, 1.0);
  return 2.0 * std::acos(dot);
}

// Same metric from the trace of a^T b; independent route used in checks.
inline double trace_angle(const Matrix3d& a, const Matrix3d& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

// Haar-uniform draw: normalized 4-D standard normal.
inline Rotation sample_uniform(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const double w = normal(rng), x = normal(rng), y = normal(rng), z = normal(rng);
    if (w * w + x * x + y * y + z * z > 1e-24) return {w, x, y, z};
  }
}

inline std::vector<Rotation> sample_uniform(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<Rotation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_uniform(rng));
  return out;
}

// Nearest rotation in Frobenius norm (orthogonal Procrustes).
inline Rotation project_to_so3(const Matrix3d& m) {
  Eigen::JacobiSVD<Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (!(svd.singularValues()(2) >= 1e-12)) {
    throw DegenerateMatrix("cannot project a rank-deficient matrix onto SO(3)");
  }
  const Matrix3d& u = svd.matrixU();
  const Matrix3d& v = svd.matrixV();
  Matrix3d d = Matrix3d::Identity();
  d(2, 2) = (u * v.transpose()).determinant() < 0 ? -1.0 : 1.0;
  return Rotation::from_matrix(u * d * v.transpose());
}

struct AxisAngle {
  Vector3d axis = Vector3d::UnitX();
  double angle = 0.0;  // [0, pi]
};

inline AxisAngle to_axis_angle(const Rotation& r) {
  const Vector3d v(r.x(), r.y(), r.z());
  const double s = v.norm();
  if (s < 1e-300) return {};
  return {v / s, 2.0 * std::atan2(s, r.w())};
}

inline Rotation from_axis_angle(const AxisAngle& aa) { return Rotation::from_axis_angle(aa.axis, aa.angle); }

// R = Rz(yaw) Ry(pitch) Rx(roll). At |pitch| = pi/2 the decomposition is
// many-to-one; roll is then reported as 0.
struct EulerZyx {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

inline EulerZyx to_euler_zyx(const Rotation& r) {
  const Matrix3d m = r.matrix();
  const double sp = std::clamp(-m(2, 0), -1.0, 1.0);
  EulerZyx e;
  e.pitch = std::asin(sp);
  if (std::abs(sp) < 1.0 - 1e-12) {
    e.yaw = std::atan2(m(1, 0), m(0, 0));
    e.roll = std::atan2(m(2, 1), m(2, 2));
  } else {
    e.yaw = std::atan2(-m(0, 1), m(1, 1));
    e.roll = 0.0;
  }
  return e;
}

inline Rotation from_euler_zyx(const EulerZyx& e) {
  return Rotation::rz(e.yaw) * Rotation::ry(e.pitch) * Rotation::rx(e.roll);
}

enum class RotationFormat { matrix, quaternion, axis_angle, euler_zyx };

inline int representation_size(RotationFormat format) {
  switch (format) {
    case RotationFormat::matrix: return 9;
    case RotationFormat::quaternion: return 4;
    case RotationFormat::axis_angle: return 4;
    case RotationFormat::euler_zyx: return 3;
  }
  return 0;
}

// Flat representation values:
//   matrix     9 entries, row-major
//   quaternion (w, x, y, z), canonical sign
//   axis_angle (axis x, y, z, angle)
//   euler_zyx  (yaw, pitch, roll)
inline std::vector<double> convert(const Rotation& r, RotationFormat format) {
  switch (format) {
    case RotationFormat::matrix: {
      const Matrix3d m = r.matrix();
      return {m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2)};
    }
    case RotationFormat::quaternion:
      return {r.w(), r.x(), r.y(), r.z()};
    case RotationFormat::axis_angle: {
      const AxisAngle aa = to_axis_angle(r);
      return {aa.axis.x(), aa.axis.y(), aa.axis.z(), aa.angle};
    }
    case RotationFormat::euler_zyx: {
      const EulerZyx e = to_euler_zyx(r);
      return {e.yaw, e.pitch, e.roll};
    }
  }
  return {};
}

inline Rotation from_representation(std::span<const double> v, RotationFormat format) {
  if (static_cast<int>(v.size()) != representation_size(format)) {
    throw DimensionMismatch("representation has the wrong number of values");
  }
  switch (format) {
    case RotationFormat::matrix: {
      Matrix3d m;
      m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
      return project_to_so3(m);
    }
    case RotationFormat::quaternion:
      return {v[0], v[1], v[2], v[3]};
    case RotationFormat::axis_angle:
      return Rotation::from_axis_angle(Vector3d(v[0], v[1], v[2]), v[3]);
    case RotationFormat::euler_zyx:
      return from_euler_zyx({v[0], v[1], v[2]});
  }
  return {};
}

// Wire format: 4 little-endian f64 (w, x, y, z), canonical sign.
inline void write_rotation(std::ostream& out, const Rotation& r) {
  for (double c : r.quaternion()) io::write_le(out, c);
}

inline Rotation read_rotation(std::istream& in) {
  const double w = io::read_le<double>(in);
  const double x = io::read_le<double>(in);
  const double y = io::read_le<double>(in);
  const double z = io::read_le<double>(in);
  return Rotation::from_stored(w, x, y, z);
}

}  // namespace ipdf

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace trajssl {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Wrap an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

// Unit-norm 3-vector. Every constructor and every operation that returns a
// UnitVec3 renormalizes explicitly, so the norm stays 1 within 1e-12.
class UnitVec3 {
 public:
  UnitVec3() : v_{0.0, 0.0, 1.0} {}

  explicit UnitVec3(const Vec3& v) {
    const double n = norm(v);
    if (!(n > 1e-300)) {
      throw std::invalid_argument("UnitVec3: cannot normalize zero vector");
    }
    v_ = v * (1.0 / n);
  }

  UnitVec3(double x, double y, double z) : UnitVec3(Vec3{x, y, z}) {}

  double x() const { return v_.x; }
  double y() const { return v_.y; }
  double z() const { return v_.z; }
  const Vec3& vec() const { return v_; }

  UnitVec3 operator-() const { return UnitVec3(-v_); }

 private:
  Vec3 v_;
};

inline double dot(const UnitVec3& a, const UnitVec3& b) {
  return dot(a.vec(), b.vec());
}

// Camera position on the viewing sphere, spherical coordinates.
// Azimuth is always wrapped into (-pi, pi]; elevation must lie in
// [-pi/2, pi/2] and is never silently clamped.
struct Pose {
  double azimuth = 0.0;
  double elevation = 0.0;

  Pose() = default;
  Pose(double az, double el) : azimuth(wrap_angle(az)), elevation(el) {
    if (!(el >= -kPi / 2 - 1e-12 && el <= kPi / 2 + 1e-12)) {
      throw std::invalid_argument("Pose: elevation outside [-pi/2, pi/2]");
    }
  }
};

// Componentwise pose difference; d_azimuth wrapped into (-pi, pi],
// d_elevation lives in [-pi, pi].
struct RelativePose {
  double d_azimuth = 0.0;
  double d_elevation = 0.0;
};

struct Quaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  static Quaternion from_axis_angle(const Vec3& axis, double angle) {
    const double n = norm(axis);
    if (!(n > 1e-300)) {
      throw std::invalid_argument("Quaternion: zero axis");
    }
    const double s = std::sin(angle / 2.0) / n;
    return {std::cos(angle / 2.0), axis.x * s, axis.y * s, axis.z * s};
  }

  Vec3 rotate(const Vec3& v) const {
    // q v q* expanded via the double-cross identity.
    const Vec3 u{x, y, z};
    const Vec3 t = cross(u, v) * 2.0;
    return v + t * w + cross(u, t);
  }
};

// Right-handed orthonormal camera basis; forward points from the camera
// position toward the origin.
struct CameraFrame {
  UnitVec3 right, up, forward;
};

// v = (cos(el) sin(az), sin(el), cos(el) cos(az)); azimuth 0 maps to +z.
inline UnitVec3 pose_to_unit_vector(const Pose& p) {
  const double ce = std::cos(p.elevation);
  return UnitVec3(Vec3{ce * std::sin(p.azimuth), std::sin(p.elevation),
                       ce * std::cos(p.azimuth)});
}

// Inverse of pose_to_unit_vector. At the exact poles (|y| = 1) azimuth is
// undefined; this returns azimuth 0 there by convention.
inline Pose unit_vector_to_pose(const UnitVec3& v) {
  const double y = std::min(1.0, std::max(-1.0, v.y()));
  if (std::abs(v.x()) < 1e-300 && std::abs(v.z()) < 1e-300) {
    return Pose(0.0, y >= 0.0 ? kPi / 2 : -kPi / 2);
  }
  return Pose(std::atan2(v.x(), v.z()), std::asin(y));
}

// Angle between two unit vectors in [0, pi]; atan2 form stays accurate for
// nearly parallel and nearly antiparallel inputs.
inline double geodesic_angle(const UnitVec3& p, const UnitVec3& q) {
  return std::atan2(norm(cross(p.vec(), q.vec())), dot(p, q));
}

// Offset Fibonacci lattice: y_i = 1 - (2i+1)/n, golden-angle azimuth.
// Avoids the exact poles for every n. Optional rotation is applied to each
// point (used for the out-of-domain pose set).
inline std::vector<UnitVec3> fibonacci_lattice(
    int n, const std::optional<Quaternion>& rotation = std::nullopt) {
  if (n < 1) throw std::invalid_argument("fibonacci_lattice: n must be >= 1");
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  const double step = 2.0 * kPi * (1.0 - 1.0 / golden);
  std::vector<UnitVec3> out;
  out.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    const double y = 1.0 - double(2 * i + 1) / double(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = step * double(i);
    Vec3 v{r * std::sin(phi), y, r * std::cos(phi)};
    if (rotation) v = rotation->rotate(v);
    out.push_back(UnitVec3(v));
  }
  return out;
}

// Fixed rotation applied to the out-of-domain Fib(100) lattice: 23 degrees
// about (1,2,3)/sqrt(14). Arbitrary but pinned; tests verify the rotated
// lattice shares no point with Fib(50).
inline Quaternion out_of_domain_rotation() {
  return Quaternion::from_axis_angle(Vec3{1.0, 2.0, 3.0},
                                     23.0 * kPi / 180.0);
}

// Minimum pairwise geodesic angle of the Fib(50) lattice, frozen from an
// exhaustive scan over all 1225 pairs (regression constant; tests recompute
// it by brute force). Half of it is the default relative-pose tolerance.
inline constexpr double kFib50MinPairwiseAngle = 0.44039046172998164;

// Great-circle interpolation between non-antipodal unit vectors.
inline UnitVec3 slerp(const UnitVec3& p, const UnitVec3& q, double t) {
  const double ang = geodesic_angle(p, q);
  if (ang > kPi - 1e-6) {
    throw std::invalid_argument("slerp: antipodal inputs");
  }
  const double s = std::sin(ang);
  if (s < 1e-12) {
    // Nearly coincident; linear blend then renormalize.
    return UnitVec3(p.vec() * (1.0 - t) + q.vec() * t);
  }
  const double a = std::sin((1.0 - t) * ang) / s;
  const double b = std::sin(t * ang) / s;
  return UnitVec3(p.vec() * a + q.vec() * b);
}

// Reflect pL through pC along their great circle: pR = 2(pL.pC) pC - pL.
// Realizes the equidistant condition angle(pL,pC) = angle(pC,pR).
inline UnitVec3 extend_geodesic(const UnitVec3& pL, const UnitVec3& pC) {
  if (geodesic_angle(pL, pC) > kPi - 1e-6) {
    throw std::invalid_argument("extend_geodesic: antipodal inputs");
  }
  const double d = dot(pL, pC);
  return UnitVec3(pC.vec() * (2.0 * d) - pL.vec());
}

// u = v - (v.z) z, the tangential component of v at z. Works for any
// dimension; used for 3-d poses in tests and d-dim embeddings in the loss.
inline void tangent_project(std::span<const double> v,
                            std::span<const double> z,
                            std::span<double> out) {
  if (v.size() != z.size() || v.size() != out.size() || v.size() < 2) {
    throw std::invalid_argument("tangent_project: dimension mismatch");
  }
  double vz = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) vz += v[i] * z[i];
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - vz * z[i];
}

inline Vec3 tangent_project(const Vec3& v, const UnitVec3& z) {
  const double vz = dot(v, z.vec());
  return v - z.vec() * vz;
}

inline RelativePose relative_pose(const Pose& p1, const Pose& p2) {
  return {wrap_angle(p2.azimuth - p1.azimuth), p2.elevation - p1.elevation};
}

// Cubic spherical Bezier: de Casteljau with slerp in place of linear
// interpolation. Consecutive control points must be non-antipodal.
inline UnitVec3 bezier_sphere(const UnitVec3& p0, const UnitVec3& p1,
                              const UnitVec3& p2, const UnitVec3& p3,
                              double t) {
  const UnitVec3 a = slerp(p0, p1, t);
  const UnitVec3 b = slerp(p1, p2, t);
  const UnitVec3 c = slerp(p2, p3, t);
  const UnitVec3 d = slerp(a, b, t);
  const UnitVec3 e = slerp(b, c, t);
  return slerp(d, e, t);
}

// Look-at basis for a camera at the pose's sphere position, world up
// (0,1,0). Convention (pinned by tests): forward = -position,
// right = normalize(up_world x forward), up = forward x right, so that
// cross(right, up) = forward. Rejected near the poles where the world up
// is parallel to the view direction.
inline CameraFrame look_at_frame(const Pose& p) {
  if (std::abs(p.elevation) >= kPi / 2 - 1e-6) {
    throw std::invalid_argument(
        "look_at_frame: pose too close to a pole for up vector (0,1,0)");
  }
  const UnitVec3 position = pose_to_unit_vector(p);
  const UnitVec3 forward(-position.vec());
  const Vec3 up_world{0.0, 1.0, 0.0};
  const UnitVec3 right(cross(up_world, forward.vec()));
  const UnitVec3 up(cross(forward.vec(), right.vec()));
  return {right, up, forward};
}

}  // namespace trajssl

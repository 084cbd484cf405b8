#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trajssl/geometry.hpp"
#include "trajssl/rng.hpp"

namespace trajssl {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  void append(const TriMesh& other) {
    const int base = int(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    for (auto f : other.faces) {
      faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    }
  }
};

struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 axis_angle(Vec3 axis, double angle) {
    const double n = norm(axis);
    axis = axis * (1.0 / n);
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    const double x = axis.x, y = axis.y, z = axis.z;
    Mat3 r;
    r.m = {t * x * x + c,     t * x * y - s * z, t * x * z + s * y,
           t * x * y + s * z, t * y * y + c,     t * y * z - s * x,
           t * x * z - s * y, t * y * z + s * x, t * z * z + c};
    return r;
  }

  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += m[3 * i + k] * o.m[3 * k + j];
        r.m[3 * i + j] = s;
      }
    }
    return r;
  }

  double distance(const Mat3& o) const {
    double d = 0.0;
    for (int i = 0; i < 9; ++i) d = std::max(d, std::abs(m[i] - o.m[i]));
    return d;
  }

  bool is_identity(double tol = 1e-9) const { return distance(Mat3{}) < tol; }
};

// -----------------------------------------------------------------------
// Solid builders. Every builder emits a closed triangle mesh.
// -----------------------------------------------------------------------

inline TriMesh make_box(const Vec3& center, const Vec3& half) {
  TriMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.push_back({center.x + ((i & 1) ? half.x : -half.x),
                          center.y + ((i & 2) ? half.y : -half.y),
                          center.z + ((i & 4) ? half.z : -half.z)});
  }
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

// n-gon prism about the y axis (n = 16 gives the cylinder family).
inline TriMesh make_prism(int n, double radius, double half_height,
                          const Vec3& center = {}) {
  TriMesh m;
  for (int ring = 0; ring < 2; ++ring) {
    const double y = center.y + (ring == 0 ? -half_height : half_height);
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * kPi * double(i) / double(n);
      m.vertices.push_back(
          {center.x + radius * std::cos(a), y, center.z + radius * std::sin(a)});
    }
  }
  const int bot_c = int(m.vertices.size());
  m.vertices.push_back({center.x, center.y - half_height, center.z});
  const int top_c = int(m.vertices.size());
  m.vertices.push_back({center.x, center.y + half_height, center.z});
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.faces.push_back({i, j, n + j});
    m.faces.push_back({i, n + j, n + i});
    m.faces.push_back({bot_c, j, i});
    m.faces.push_back({top_c, n + i, n + j});
  }
  return m;
}

inline TriMesh make_cone(int n, double radius, double base_y, double apex_y) {
  TriMesh m;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * kPi * double(i) / double(n);
    m.vertices.push_back({radius * std::cos(a), base_y, radius * std::sin(a)});
  }
  const int apex = int(m.vertices.size());
  m.vertices.push_back({0.0, apex_y, 0.0});
  const int bot_c = int(m.vertices.size());
  m.vertices.push_back({0.0, base_y, 0.0});
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.faces.push_back({i, apex, j});
    m.faces.push_back({bot_c, j, i});
  }
  return m;
}

inline TriMesh make_pyramid(double base_half, double base_y, double apex_y) {
  TriMesh m;
  m.vertices = {{-base_half, base_y, -base_half},
                {base_half, base_y, -base_half},
                {base_half, base_y, base_half},
                {-base_half, base_y, base_half},
                {0.0, apex_y, 0.0}};
  m.faces = {{0, 4, 1}, {1, 4, 2}, {2, 4, 3}, {3, 4, 0}, {0, 1, 2}, {0, 2, 3}};
  return m;
}

inline TriMesh make_octahedron(double rx, double ry, double rz) {
  TriMesh m;
  m.vertices = {{rx, 0, 0}, {-rx, 0, 0}, {0, ry, 0},
                {0, -ry, 0}, {0, 0, rz}, {0, 0, -rz}};
  m.faces = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
             {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  return m;
}

// Triangle cross-section {(-hx,y0),(hx,y0),(0,y1)} extruded over z in
// [-hz, hz]; roofs and the wedge family.
inline TriMesh make_wedge(double hx, double y0, double y1, double hz,
                          const Vec3& center = {}) {
  TriMesh m;
  const double zs[2] = {center.z - hz, center.z + hz};
  for (double z : zs) {
    m.vertices.push_back({center.x - hx, center.y + y0, z});
    m.vertices.push_back({center.x + hx, center.y + y0, z});
    m.vertices.push_back({center.x, center.y + y1, z});
  }
  m.faces = {{0, 1, 2}, {3, 5, 4}, {0, 3, 4}, {0, 4, 1},
             {1, 4, 5}, {1, 5, 2}, {2, 5, 3}, {2, 3, 0}};
  return m;
}

// -----------------------------------------------------------------------
// Shape families. Twelve asymmetric composites; the first eight serve as
// in-domain categories by default and the last four as out-of-domain.
// -----------------------------------------------------------------------

inline constexpr int kFamilyCount = 12;

inline const std::array<std::string, kFamilyCount>& family_names() {
  static const std::array<std::string, kFamilyCount> names = {
      "l_block",   "t_block",       "cross",      "house",
      "stepped",   "notched_prism", "cylinder16", "cone16",
      "long_box",  "pyramid",       "octahedron", "tri_prism"};
  return names;
}

namespace detail {

inline TriMesh family_base(int family_id) {
  switch (family_id) {
    case 0: {  // l_block
      TriMesh m = make_box({0, 0, 0}, {0.8, 0.25, 0.25});
      m.append(make_box({0.55, 0.55, 0}, {0.25, 0.55, 0.25}));
      return m;
    }
    case 1: {  // t_block
      TriMesh m = make_box({0, 0.45, 0}, {0.8, 0.22, 0.22});
      m.append(make_box({0, -0.25, 0}, {0.22, 0.55, 0.22}));
      return m;
    }
    case 2: {  // cross
      TriMesh m = make_box({0, 0, 0}, {0.85, 0.2, 0.2});
      m.append(make_box({0, 0, 0}, {0.2, 0.85, 0.2}));
      return m;
    }
    case 3: {  // house
      TriMesh m = make_box({0, 0, 0}, {0.55, 0.38, 0.42});
      m.append(make_wedge(0.55, 0.0, 0.42, 0.42, {0, 0.38, 0}));
      return m;
    }
    case 4: {  // stepped
      TriMesh m = make_box({0, -0.45, 0}, {0.75, 0.22, 0.55});
      m.append(make_box({-0.18, -0.01, 0}, {0.55, 0.22, 0.4}));
      m.append(make_box({-0.36, 0.43, 0}, {0.35, 0.22, 0.27}));
      return m;
    }
    case 5: {  // notched_prism: an L footprint in the xz plane
      TriMesh m = make_box({0, 0, 0}, {0.75, 0.3, 0.28});
      m.append(make_box({0.45, 0, 0.52}, {0.3, 0.3, 0.32}));
      return m;
    }
    case 6:  // cylinder16
      return make_prism(16, 0.5, 0.65);
    case 7:  // cone16
      return make_cone(16, 0.6, -0.45, 0.8);
    case 8:  // long_box
      return make_box({0, 0, 0}, {0.9, 0.32, 0.2});
    case 9:  // pyramid
      return make_pyramid(0.6, -0.38, 0.75);
    case 10:  // octahedron
      return make_octahedron(0.75, 0.55, 0.38);
    case 11:  // tri_prism
      return make_wedge(0.6, -0.42, 0.62, 0.3);
    default:
      throw std::invalid_argument("family_base: unknown family id");
  }
}

}  // namespace detail

// Deterministic instance construction: per-instance aspect jitter of +-30%
// on each axis, then a small symmetry-breaking marker cube anchored at a
// generic point near the jittered bounding box (offset jittered within a
// fixed +-20% band), finally a uniform rescale so every vertex lies within
// the 0.8 ball. Draw order: jx, jy, jz, then marker u1,u2,u3, then size
// jitter u4.
inline TriMesh make_instance(int family_id, std::uint64_t instance_seed) {
  Rng rng = Rng::stream(instance_seed, "instance_mesh", std::uint64_t(family_id));
  TriMesh mesh = detail::family_base(family_id);

  const double jx = rng.uniform(0.7, 1.3);
  const double jy = rng.uniform(0.7, 1.3);
  const double jz = rng.uniform(0.7, 1.3);
  for (auto& v : mesh.vertices) {
    v.x *= jx;
    v.y *= jy;
    v.z *= jz;
  }

  Vec3 ext{0, 0, 0};
  for (const auto& v : mesh.vertices) {
    ext.x = std::max(ext.x, std::abs(v.x));
    ext.y = std::max(ext.y, std::abs(v.y));
    ext.z = std::max(ext.z, std::abs(v.z));
  }
  const double u1 = rng.uniform(-1.0, 1.0);
  const double u2 = rng.uniform(-1.0, 1.0);
  const double u3 = rng.uniform(-1.0, 1.0);
  const double u4 = rng.uniform(-1.0, 1.0);
  const Vec3 anchor{0.62 * ext.x * (1.0 + 0.2 * u1),
                    0.38 * ext.y * (1.0 + 0.2 * u2),
                    0.52 * ext.z * (1.0 + 0.2 * u3)};
  const double msize =
      0.14 * (ext.x + ext.y + ext.z) / 3.0 * (1.0 + 0.2 * u4);
  mesh.append(make_box(anchor, {msize, msize, msize}));

  double r = 0.0;
  for (const auto& v : mesh.vertices) r = std::max(r, norm(v));
  const double s = 0.78 / r;
  for (auto& v : mesh.vertices) v = v * s;
  return mesh;
}

// 72 test rotations: the 60 proper rotations of the icosahedral group
// (generated by closure from a vertex 5-fold and a face 3-fold turn) plus
// 12 coordinate-axis rotations the icosahedral group does not contain.
inline const std::vector<Mat3>& symmetry_test_rotations() {
  static const std::vector<Mat3> rotations = [] {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Mat3> group{Mat3{}};
    const Mat3 a = Mat3::axis_angle({0, 1, phi}, 2.0 * kPi / 5.0);
    const Mat3 b = Mat3::axis_angle({1, 0, phi}, 2.0 * kPi / 3.0);
    auto push_unique = [&](const Mat3& r) {
      for (const auto& g : group) {
        if (g.distance(r) < 1e-6) return false;
      }
      group.push_back(r);
      return true;
    };
    push_unique(a);
    push_unique(b);
    bool grew = true;
    while (grew) {
      grew = false;
      const std::size_t n = group.size();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (push_unique(group[i] * group[j])) grew = true;
        }
      }
    }
    for (const Vec3& axis : {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}}) {
      for (double k : {0.5, 1.0, 1.5}) {
        group.push_back(Mat3::axis_angle(axis, k * kPi));
      }
    }
    group.push_back(Mat3::axis_angle({1, 1, 1}, 2.0 * kPi / 3.0));
    group.push_back(Mat3::axis_angle({1, 1, 1}, 4.0 * kPi / 3.0));
    group.push_back(Mat3::axis_angle({1, 1, 0}, kPi));
    return group;
  }();
  return rotations;
}

// True if some non-identity rotation in the test set maps the vertex set
// onto itself within `tol` in both directions.
inline bool has_nontrivial_symmetry(const TriMesh& mesh, double tol = 1e-3) {
  const auto& rotations = symmetry_test_rotations();
  const double tol2 = tol * tol;
  auto covered = [&](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    for (const auto& p : from) {
      double best = 1e300;
      for (const auto& q : to) {
        const Vec3 d = p - q;
        best = std::min(best, dot(d, d));
        if (best < tol2) break;
      }
      if (best >= tol2) return false;
    }
    return true;
  };
  for (const auto& rot : rotations) {
    if (rot.is_identity()) continue;
    std::vector<Vec3> rotated;
    rotated.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) rotated.push_back(rot.apply(v));
    if (covered(rotated, mesh.vertices) && covered(mesh.vertices, rotated)) {
      return true;
    }
  }
  return false;
}

}  // namespace trajssl

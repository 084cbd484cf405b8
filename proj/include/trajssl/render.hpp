#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "trajssl/errors.hpp"
#include "trajssl/geometry.hpp"
#include "trajssl/mesh.hpp"

namespace trajssl {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // row-major, row 0 at top, values in [0,1]

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(std::size_t(w) * h, 0.0f) {}

  float at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
  float& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
};

// Orthographic z-buffered rasterizer with flat Lambertian shading.
// Camera sits at the pose's position on the unit sphere looking at the
// origin (frame from look_at_frame); the light direction (1,1,1)/sqrt(3) is
// fixed in world space and no shadows are cast. Background is 0. The whole
// path is plain double arithmetic in a fixed order, so identical inputs
// produce identical pixels.
inline Image render_mesh(const TriMesh& mesh, const Pose& pose, int size) {
  const CameraFrame frame = look_at_frame(pose);
  const Vec3 light = Vec3{1, 1, 1} * (1.0 / std::sqrt(3.0));
  const double ambient = 0.3;

  Image img(size, size);
  std::vector<double> zbuf(std::size_t(size) * size,
                           std::numeric_limits<double>::infinity());

  // Screen coordinates: sx right, sy down, pixel centers at half-integers.
  auto to_screen = [&](const Vec3& v, double& sx, double& sy, double& depth) {
    const double u = dot(v, frame.right.vec());
    const double w = dot(v, frame.up.vec());
    depth = dot(v, frame.forward.vec());  // smaller = nearer to the camera
    sx = (u + 1.0) * 0.5 * size;
    sy = (1.0 - w) * 0.5 * size;
  };

  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[std::size_t(f[0])];
    const Vec3& b = mesh.vertices[std::size_t(f[1])];
    const Vec3& c = mesh.vertices[std::size_t(f[2])];

    double ax, ay, az, bx, by, bz, cx, cy, cz;
    to_screen(a, ax, ay, az);
    to_screen(b, bx, by, bz);
    to_screen(c, cx, cy, cz);

    const double area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    if (std::abs(area) < 1e-12) continue;  // degenerate after projection

    Vec3 n = cross(b - a, c - a);
    const double nn = norm(n);
    if (nn < 1e-15) continue;
    n = n * (1.0 / nn);
    if (dot(n, frame.forward.vec()) > 0.0) n = -n;  // face the camera
    const double shade = std::clamp(
        ambient + (1.0 - ambient) * std::max(0.0, dot(n, light)), 0.0, 1.0);

    const int x0 = std::max(0, int(std::floor(std::min({ax, bx, cx}))));
    const int x1 = std::min(size - 1, int(std::ceil(std::max({ax, bx, cx}))));
    const int y0 = std::max(0, int(std::floor(std::min({ay, by, cy}))));
    const int y1 = std::min(size - 1, int(std::ceil(std::max({ay, by, cy}))));

    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        const double sx = px + 0.5, sy = py + 0.5;
        const double w0 = (bx - ax) * (sy - ay) - (by - ay) * (sx - ax);
        const double w1 = (cx - bx) * (sy - by) - (cy - by) * (sx - bx);
        const double w2 = (ax - cx) * (sy - cy) - (ay - cy) * (sx - cx);
        const bool inside = area > 0.0 ? (w0 >= 0 && w1 >= 0 && w2 >= 0)
                                       : (w0 <= 0 && w1 <= 0 && w2 <= 0);
        if (!inside) continue;
        // Barycentric depth; w1 weights vertex a, w2 vertex b, w0 vertex c.
        const double depth = (w1 * az + w2 * bz + w0 * cz) / area;
        const std::size_t idx = std::size_t(py) * size + px;
        if (depth < zbuf[idx]) {
          zbuf[idx] = depth;
          img.pixels[idx] = float(shade);
        }
      }
    }
  }
  return img;
}

// Bilinearly samples the axis-aligned source region [x0, x0+w) x [y0, y0+h)
// (continuous pixel coordinates) into an out_size x out_size image. With
// the full region and matching sizes this is the identity.
inline Image resample_region(const Image& src, double x0, double y0, double w,
                             double h, int out_size) {
  Image out(out_size, out_size);
  auto fetch = [&](int x, int y) {
    x = std::clamp(x, 0, src.width - 1);
    y = std::clamp(y, 0, src.height - 1);
    return double(src.at(x, y));
  };
  for (int j = 0; j < out_size; ++j) {
    const double sy = y0 + (j + 0.5) * h / out_size - 0.5;
    const int iy = int(std::floor(sy));
    const double fy = sy - iy;
    for (int i = 0; i < out_size; ++i) {
      const double sx = x0 + (i + 0.5) * w / out_size - 0.5;
      const int ix = int(std::floor(sx));
      const double fx = sx - ix;
      const double v = (1 - fy) * ((1 - fx) * fetch(ix, iy) + fx * fetch(ix + 1, iy)) +
                       fy * ((1 - fx) * fetch(ix, iy + 1) + fx * fetch(ix + 1, iy + 1));
      out.at(i, j) = float(v);
    }
  }
  return out;
}

// Binary portable graymap (P5), 8-bit.
inline void write_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm: cannot open " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (float p : img.pixels) {
    const int v = int(std::lround(std::clamp(double(p), 0.0, 1.0) * 255.0));
    out.put(char(v));
  }
  if (!out) throw IoError("write_pgm: write failed for " + path);
}

}  // namespace trajssl

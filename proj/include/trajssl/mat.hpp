#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace trajssl {

// Dense row-major matrix of doubles. Deliberately minimal: storage plus the
// few helpers the losses and evaluation paths need.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(std::size_t(r) * std::size_t(c), 0.0) {}

  double* row(int r) { return data.data() + std::size_t(r) * cols; }
  const double* row(int r) const { return data.data() + std::size_t(r) * cols; }

  std::span<double> row_span(int r) { return {row(r), std::size_t(cols)}; }
  std::span<const double> row_span(int r) const {
    return {row(r), std::size_t(cols)};
  }

  double& at(int r, int c) { return data[std::size_t(r) * cols + c]; }
  double at(int r, int c) const { return data[std::size_t(r) * cols + c]; }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline void l2_normalize_rows(Mat& m, double eps = 1e-12) {
  for (int r = 0; r < m.rows; ++r) {
    auto row = m.row_span(r);
    const double n = std::max(norm2(row), eps);
    for (auto& v : row) v /= n;
  }
}

}  // namespace trajssl

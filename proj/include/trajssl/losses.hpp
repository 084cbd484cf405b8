#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "trajssl/mat.hpp"

namespace trajssl {

// Value plus analytic gradients for a three-vector loss.
struct TripletLoss {
  double value = 0.0;
  std::vector<double> grad_left, grad_center, grad_right;
};

// Value plus analytic gradients for a two-branch batch loss.
struct BatchLoss {
  double value = 0.0;
  Mat grad_a, grad_b;
};

// Trajectory loss: with v1 = zC - zL, v2 = zR - zC and u_i the tangential
// component of v_i at zC, the loss is -(u1.u2) / ((|u1|+eps)(|u2|+eps)).
// Minimized (-1) when the three embeddings advance along one geodesic,
// maximized (+1) for back-and-forth motion (zL == zR). If both tangential
// components are below eps the triplet is degenerate and contributes zero
// value and zero gradient.
//
// The sign convention v2 = zR - zC is the one under which geodesic motion
// minimizes the loss.
inline TripletLoss traj_loss(std::span<const double> zl,
                             std::span<const double> zc,
                             std::span<const double> zr, double eps = 1e-8) {
  const std::size_t d = zl.size();
  if (zc.size() != d || zr.size() != d || d < 2) {
    throw std::invalid_argument("traj_loss: dimension mismatch");
  }
  std::vector<double> v1(d), v2(d), u1(d), u2(d);
  for (std::size_t i = 0; i < d; ++i) {
    v1[i] = zc[i] - zl[i];
    v2[i] = zr[i] - zc[i];
  }
  const double v1c = dot(v1, zc);
  const double v2c = dot(v2, zc);
  for (std::size_t i = 0; i < d; ++i) {
    u1[i] = v1[i] - v1c * zc[i];
    u2[i] = v2[i] - v2c * zc[i];
  }
  const double m1 = norm2(u1);
  const double m2 = norm2(u2);

  TripletLoss out;
  out.grad_left.assign(d, 0.0);
  out.grad_center.assign(d, 0.0);
  out.grad_right.assign(d, 0.0);
  if (m1 < eps && m2 < eps) return out;  // degenerate triplet

  const double n1 = m1 + eps;
  const double n2 = m2 + eps;
  const double s = dot(u1, u2);
  out.value = -s / (n1 * n2);

  // d value / d u_i
  std::vector<double> gu1(d), gu2(d);
  const double inv12 = 1.0 / (n1 * n2);
  for (std::size_t i = 0; i < d; ++i) {
    const double uh1 = m1 > 0.0 ? u1[i] / m1 : 0.0;
    const double uh2 = m2 > 0.0 ? u2[i] / m2 : 0.0;
    gu1[i] = -u2[i] * inv12 + s * uh1 / (n1 * n1 * n2);
    gu2[i] = -u1[i] * inv12 + s * uh2 / (n2 * n2 * n1);
  }

  // Chain through u_i = v_i - (v_i.zc) zc, then v1 = zc - zl, v2 = zr - zc.
  const double g1c = dot(gu1, zc);
  const double g2c = dot(gu2, zc);
  for (std::size_t i = 0; i < d; ++i) {
    const double gv1 = gu1[i] - g1c * zc[i];
    const double gv2 = gu2[i] - g2c * zc[i];
    out.grad_left[i] = -gv1;
    out.grad_right[i] = gv2;
    out.grad_center[i] = gv1 - gv2 - (g1c * v1[i] + v1c * gu1[i]) -
                         (g2c * v2[i] + v2c * gu2[i]);
  }
  return out;
}

// Applies an orthogonal matrix to all three embeddings and returns both loss
// values; the trajectory loss is provably invariant under common orthogonal
// transforms, and callers assert the pair is equal.
inline std::pair<double, double> traj_loss_rotation_check(
    std::span<const double> zl, std::span<const double> zc,
    std::span<const double> zr, const Mat& rot, double eps = 1e-8) {
  const int d = int(zl.size());
  if (rot.rows != d || rot.cols != d) {
    throw std::invalid_argument("traj_loss_rotation_check: bad rotation shape");
  }
  auto apply = [&](std::span<const double> v) {
    std::vector<double> out(std::size_t(d), 0.0);
    for (int r = 0; r < d; ++r) {
      out[std::size_t(r)] = dot(rot.row_span(r), v);
    }
    return out;
  };
  const auto rl = apply(zl);
  const auto rc = apply(zc);
  const auto rr = apply(zr);
  return {traj_loss(zl, zc, zr, eps).value, traj_loss(rl, rc, rr, eps).value};
}

// NT-Xent over a batch of positive pairs: rows i of za and zb are two views
// of the same image. Builds the 2B x 2B cosine-similarity matrix at the
// given temperature, excludes self-similarities, and averages the softmax
// cross-entropy over all 2B anchors. Rows are expected L2-normalized.
inline BatchLoss ntxent_loss(const Mat& za, const Mat& zb, double temperature) {
  if (za.rows != zb.rows || za.cols != zb.cols) {
    throw std::invalid_argument("ntxent_loss: shape mismatch");
  }
  const int b = za.rows;
  const int k = za.cols;
  if (b < 2) throw std::invalid_argument("ntxent_loss: batch must be >= 2");
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("ntxent_loss: temperature must be positive");
  }
  const int n = 2 * b;

  // Stacked view matrix: rows 0..b-1 from za, b..2b-1 from zb.
  auto zrow = [&](int i) -> std::span<const double> {
    return i < b ? za.row_span(i) : zb.row_span(i - b);
  };

  Mat sim(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      sim.at(i, j) = i == j ? 0.0 : dot(zrow(i), zrow(j)) / temperature;
    }
  }

  // G[i][j] = dL/dsim[i][j]; softmax over each anchor row without the
  // diagonal, stabilized by the row max.
  Mat g(n, n);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const int pos = i < b ? i + b : i - b;
    double mx = -1e300;
    for (int j = 0; j < n; ++j) {
      if (j != i) mx = std::max(mx, sim.at(i, j));
    }
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j != i) denom += std::exp(sim.at(i, j) - mx);
    }
    loss += -(sim.at(i, pos) - mx) + std::log(denom);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double soft = std::exp(sim.at(i, j) - mx) / denom;
      g.at(i, j) = (soft - (j == pos ? 1.0 : 0.0)) / double(n);
    }
  }

  BatchLoss out;
  out.value = loss / double(n);
  out.grad_a = Mat(b, k);
  out.grad_b = Mat(b, k);
  for (int a = 0; a < n; ++a) {
    double* gr = a < b ? out.grad_a.row(a) : out.grad_b.row(a - b);
    for (int j = 0; j < n; ++j) {
      if (j == a) continue;
      const double w = (g.at(a, j) + g.at(j, a)) / temperature;
      const double* zj = zrow(j).data();
      for (int c = 0; c < k; ++c) gr[c] += w * zj[c];
    }
  }
  return out;
}

// Variance-invariance-covariance loss in the cited method's standard form:
// invariance is the elementwise mean squared difference, variance a hinge
// max(0, 1 - sqrt(var + 1e-4)) averaged over dimensions and both branches,
// covariance the sum of squared off-diagonal covariances over the feature
// count, summed over branches. Unbiased (B-1) variance/covariance.
inline BatchLoss vicreg_loss(const Mat& za, const Mat& zb, double sim_coeff,
                             double var_coeff, double cov_coeff) {
  if (za.rows != zb.rows || za.cols != zb.cols) {
    throw std::invalid_argument("vicreg_loss: shape mismatch");
  }
  const int b = za.rows;
  const int k = za.cols;
  if (b < 2) throw std::invalid_argument("vicreg_loss: batch must be >= 2");

  BatchLoss out;
  out.grad_a = Mat(b, k);
  out.grad_b = Mat(b, k);

  // Invariance.
  double inv = 0.0;
  for (std::size_t i = 0; i < za.data.size(); ++i) {
    const double d = za.data[i] - zb.data[i];
    inv += d * d;
    out.grad_a.data[i] += sim_coeff * 2.0 * d / double(b * k);
    out.grad_b.data[i] -= sim_coeff * 2.0 * d / double(b * k);
  }
  inv /= double(b * k);

  // Variance and covariance per branch.
  auto branch = [&](const Mat& z, Mat& grad) {
    std::vector<double> mean(std::size_t(k), 0.0);
    for (int r = 0; r < b; ++r) {
      for (int c = 0; c < k; ++c) mean[std::size_t(c)] += z.at(r, c);
    }
    for (auto& m : mean) m /= double(b);
    Mat centered(b, k);
    for (int r = 0; r < b; ++r) {
      for (int c = 0; c < k; ++c) {
        centered.at(r, c) = z.at(r, c) - mean[std::size_t(c)];
      }
    }

    double var_term = 0.0;
    std::vector<double> std_dev(std::size_t(k));
    for (int c = 0; c < k; ++c) {
      double v = 0.0;
      for (int r = 0; r < b; ++r) v += centered.at(r, c) * centered.at(r, c);
      v /= double(b - 1);
      std_dev[std::size_t(c)] = std::sqrt(v + 1e-4);
      var_term += std::max(0.0, 1.0 - std_dev[std::size_t(c)]);
    }
    var_term /= double(k);
    // d var / dz: hinge active where std < 1; centering correction vanishes
    // because centered columns sum to zero.
    for (int c = 0; c < k; ++c) {
      const double sd = std_dev[std::size_t(c)];
      if (sd >= 1.0) continue;
      const double scale = -1.0 / (double(k) * double(b - 1) * sd);
      for (int r = 0; r < b; ++r) {
        grad.at(r, c) += var_coeff * 0.5 * scale * centered.at(r, c);
      }
    }

    // Covariance: C = centered^T centered / (B-1), off-diagonal squares / k.
    Mat cov(k, k);
    for (int c1 = 0; c1 < k; ++c1) {
      for (int c2 = c1; c2 < k; ++c2) {
        double s = 0.0;
        for (int r = 0; r < b; ++r) s += centered.at(r, c1) * centered.at(r, c2);
        s /= double(b - 1);
        cov.at(c1, c2) = s;
        cov.at(c2, c1) = s;
      }
    }
    double cov_term = 0.0;
    for (int c1 = 0; c1 < k; ++c1) {
      for (int c2 = 0; c2 < k; ++c2) {
        if (c1 != c2) cov_term += cov.at(c1, c2) * cov.at(c1, c2);
      }
    }
    cov_term /= double(k);
    // d cov / dz = 4/(k(B-1)) centered * C_offdiag (per branch).
    for (int r = 0; r < b; ++r) {
      for (int c = 0; c < k; ++c) {
        double s = 0.0;
        for (int c2 = 0; c2 < k; ++c2) {
          if (c2 != c) s += centered.at(r, c2) * cov.at(c2, c);
        }
        grad.at(r, c) += cov_coeff * 4.0 * s / (double(k) * double(b - 1));
      }
    }
    return std::pair<double, double>{var_term, cov_term};
  };

  const auto [var_a, cov_a] = branch(za, out.grad_a);
  const auto [var_b, cov_b] = branch(zb, out.grad_b);

  out.value = sim_coeff * inv + var_coeff * 0.5 * (var_a + var_b) +
              cov_coeff * (cov_a + cov_b);
  return out;
}

// Generic loss container used by the combination rule below.
struct LossValue {
  double value = 0.0;
  std::vector<std::vector<double>> grads;
};

// Total objective: semantic loss plus lambda times the trajectory loss,
// gradients combined linearly. lambda = 0 recovers the semantic baseline.
inline LossValue total_loss(const LossValue& sem, const LossValue& traj,
                            double lambda) {
  LossValue out;
  out.value = sem.value + lambda * traj.value;
  out.grads.reserve(sem.grads.size() + traj.grads.size());
  for (const auto& g : sem.grads) out.grads.push_back(g);
  for (const auto& g : traj.grads) {
    std::vector<double> scaled(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) scaled[i] = lambda * g[i];
    out.grads.push_back(std::move(scaled));
  }
  return out;
}

}  // namespace trajssl

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trajssl/nn.hpp"
#include "trajssl/rng.hpp"
#include "trajssl/tensor.hpp"

namespace trajssl {

struct GradCheckOptions {
  std::uint64_t seed = 20240913;
  int trials = 100;       // shallow subgraphs
  int deep_trials = 10;   // end-to-end encoder chain
  double step = 1e-5;     // central-difference step
  // Test fixture: negates the analytic trajectory gradient before the
  // comparison so the harness can prove it catches a wrong gradient.
  bool flip_traj_sign = false;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double tol = 1e-4;
  int trials = 0;
  bool pass = true;
};

namespace detail {

// Relative error against max(1, |analytic|, |numeric|); near-zero gradient
// components are compared absolutely.
inline double rel_err(double a, double f) {
  return std::abs(a - f) / std::max({1.0, std::abs(a), std::abs(f)});
}

// Central finite differences of a rebuilt scalar graph against the analytic
// gradients from one backward sweep. `build` must read the leaves' current
// data on every call. When `max_comps` >= 0, a random subset of components
// per leaf is probed instead of all of them.
template <typename BuildFn>
double fd_check(std::vector<Tensor>& leaves, BuildFn&& build, double h,
                Rng& rng, int max_comps = -1, double sign = 1.0) {
  for (auto& l : leaves) l.zero_grad();
  Tensor out = build();
  backward_scalar(out);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& l : leaves) {
    l.grad();  // ensure allocated
    analytic.push_back(l.node()->grad);
  }

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& data = leaves[li].data();
    std::vector<std::size_t> comps;
    if (max_comps < 0 || std::size_t(max_comps) >= data.size()) {
      comps.resize(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) comps[i] = i;
    } else {
      for (int k = 0; k < max_comps; ++k) {
        comps.push_back(std::size_t(rng.below(data.size())));
      }
    }
    for (std::size_t ci : comps) {
      const double saved = data[ci];
      data[ci] = saved + h;
      const double fp = build().value();
      data[ci] = saved - h;
      const double fm = build().value();
      data[ci] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, rel_err(sign * analytic[li][ci], fd));
    }
  }
  return worst;
}

inline Tensor const_leaf(std::vector<double> data) {
  return Tensor::from_data({int(data.size())}, std::move(data), false);
}

// Random weighting of a vector output so every component contributes to the
// scalar with distinct sensitivity.
inline Tensor weighted_sum(const Tensor& t, Rng& rng) {
  std::vector<double> w(t.numel());
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  Tensor flat = t.shape().size() == 1 ? t : flatten(t);
  return sum(mul(flat, const_leaf(std::move(w))));
}

inline void fill_uniform(Tensor& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
}

// Keeps ReLU inputs away from the kink so central differences stay valid.
inline void fill_away_from_zero(Tensor& t, Rng& rng, double margin = 0.05) {
  for (auto& v : t.data()) {
    double x;
    do {
      x = rng.uniform(-1.0, 1.0);
    } while (std::abs(x) < margin);
    v = x;
  }
}

inline void fill_unit_rows(Tensor& t, Rng& rng) {
  const int b = t.shape()[0];
  const int k = t.shape()[1];
  for (int r = 0; r < b; ++r) {
    double n = 0.0;
    double* row = t.data().data() + std::size_t(r) * k;
    for (int c = 0; c < k; ++c) {
      row[c] = rng.gaussian();
      n += row[c] * row[c];
    }
    n = std::sqrt(n);
    for (int c = 0; c < k; ++c) row[c] /= n;
  }
}

}  // namespace detail

// Runs every registered gradient subgraph. Each entry compares analytic
// gradients against central finite differences on random small instances.
inline std::vector<GradCheckEntry> run_gradient_checks(
    const GradCheckOptions& opt = {}) {
  std::vector<GradCheckEntry> report;
  const double h = opt.step;

  auto run = [&](const std::string& name, double tol, int trials,
                 auto&& one_trial) {
    GradCheckEntry e{name, 0.0, tol, trials, true};
    for (int t = 0; t < trials; ++t) {
      Rng rng = Rng::stream(opt.seed, "gradcheck/" + name, std::uint64_t(t));
      e.max_rel_err = std::max(e.max_rel_err, one_trial(rng));
    }
    e.pass = e.max_rel_err < tol;
    report.push_back(e);
  };

  run("linear", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({5}, true), Tensor::leaf({4, 5}, true),
                               Tensor::leaf({4}, true)};
    for (auto& l : leaves) detail::fill_uniform(l, rng);
    Rng wrng = rng;
    return detail::fd_check(
        leaves,
        [&]() {
          Rng r2 = wrng;
          return detail::weighted_sum(linear(leaves[0], leaves[1], leaves[2]), r2);
        },
        h, rng);
  });

  run("linear_rows", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({3, 4}, true),
                               Tensor::leaf({2, 4}, true), Tensor::leaf({2}, true)};
    for (auto& l : leaves) detail::fill_uniform(l, rng);
    Rng wrng = rng;
    return detail::fd_check(
        leaves,
        [&]() {
          Rng r2 = wrng;
          return detail::weighted_sum(linear_rows(leaves[0], leaves[1], leaves[2]),
                                      r2);
        },
        h, rng);
  });

  run("conv2d", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({2, 6, 6}, true),
                               Tensor::leaf({3, 2, 3, 3}, true),
                               Tensor::leaf({3}, true)};
    for (auto& l : leaves) detail::fill_uniform(l, rng);
    Rng wrng = rng;
    return detail::fd_check(
        leaves,
        [&]() {
          Rng r2 = wrng;
          return detail::weighted_sum(conv2d(leaves[0], leaves[1], leaves[2]), r2);
        },
        h, rng);
  });

  run("relu", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({12}, true)};
    detail::fill_away_from_zero(leaves[0], rng);
    Rng wrng = rng;
    return detail::fd_check(
        leaves,
        [&]() {
          Rng r2 = wrng;
          return detail::weighted_sum(relu(leaves[0]), r2);
        },
        h, rng);
  });

  run("avgpool2", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({2, 4, 4}, true)};
    detail::fill_uniform(leaves[0], rng);
    Rng wrng = rng;
    return detail::fd_check(
        leaves,
        [&]() {
          Rng r2 = wrng;
          return detail::weighted_sum(avgpool2(leaves[0]), r2);
        },
        h, rng);
  });

  run("global_avg_pool", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({3, 4, 4}, true)};
    detail::fill_uniform(leaves[0], rng);
    Rng wrng = rng;
    return detail::fd_check(
        leaves,
        [&]() {
          Rng r2 = wrng;
          return detail::weighted_sum(global_avg_pool(leaves[0]), r2);
        },
        h, rng);
  });

  run("l2_normalize_rows", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({3, 5}, true)};
    detail::fill_away_from_zero(leaves[0], rng, 0.1);
    Rng wrng = rng;
    return detail::fd_check(
        leaves,
        [&]() {
          Rng r2 = wrng;
          return detail::weighted_sum(l2_normalize_rows(leaves[0]), r2);
        },
        h, rng);
  });

  run("stack_rows", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({4}, true), Tensor::leaf({4}, true),
                               Tensor::leaf({4}, true)};
    for (auto& l : leaves) detail::fill_uniform(l, rng);
    Rng wrng = rng;
    return detail::fd_check(
        leaves,
        [&]() {
          Rng r2 = wrng;
          return detail::weighted_sum(stack_rows(std::span<const Tensor>(leaves)),
                                      r2);
        },
        h, rng);
  });

  run("flatten", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({2, 3, 3}, true)};
    detail::fill_uniform(leaves[0], rng);
    Rng wrng = rng;
    return detail::fd_check(
        leaves,
        [&]() {
          Rng r2 = wrng;
          return detail::weighted_sum(flatten(leaves[0]), r2);
        },
        h, rng);
  });

  run("arith_ops", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({6}, true), Tensor::leaf({6}, true)};
    for (auto& l : leaves) detail::fill_uniform(l, rng);
    return detail::fd_check(
        leaves,
        [&]() {
          Tensor a = sum(mul(leaves[0], leaves[1]));
          Tensor b = sum(mul(add(leaves[0], leaves[1]), scale(leaves[0], 0.5)));
          return add_scaled(a, b, 0.37);
        },
        h, rng);
  });

  auto head_check = [&](const std::string& name, HeadSpec spec) {
    run(name, 1e-4, opt.trials, [&, spec](Rng& rng) {
      ParamStore store;
      register_head(store, "h", spec);
      init_params(store, rng.next_u64());
      std::vector<Tensor> leaves = store.all();
      Tensor input = Tensor::leaf({2, spec.in_dim}, true);
      detail::fill_away_from_zero(input, rng);
      leaves.push_back(input);
      Rng wrng = rng;
      return detail::fd_check(
          leaves,
          [&]() {
            Rng r2 = wrng;
            return detail::weighted_sum(head_forward_rows(store, "h", spec, input),
                                        r2);
          },
          h, rng);
    });
  };
  head_check("projector_head", {HeadKind::projector, 6, 6, 3});
  head_check("compression_head", {HeadKind::compression, 8, 4, 4});
  head_check("relpose_probe_head", {HeadKind::relpose_probe, 6, 6, 3});
  head_check("linear_probe", {HeadKind::linear_probe, 6, 0, 4});

  run("softmax_ce", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({4, 5}, true)};
    detail::fill_uniform(leaves[0], rng);
    std::vector<int> labels{0, 2, 4, 1};
    return detail::fd_check(
        leaves, [&]() { return softmax_ce_node(leaves[0], labels); }, h, rng);
  });

  run("mse", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({3, 4}, true)};
    detail::fill_uniform(leaves[0], rng);
    Mat target(3, 4);
    for (auto& v : target.data) v = rng.uniform(-1.0, 1.0);
    return detail::fd_check(
        leaves, [&]() { return mse_node(leaves[0], target); }, h, rng);
  });

  run("ntxent", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({4, 8}, true),
                               Tensor::leaf({4, 8}, true)};
    for (auto& l : leaves) detail::fill_unit_rows(l, rng);
    return detail::fd_check(
        leaves, [&]() { return ntxent_node(leaves[0], leaves[1], 0.5); }, h, rng);
  });

  run("vicreg", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({4, 8}, true),
                               Tensor::leaf({4, 8}, true)};
    for (auto& l : leaves) detail::fill_uniform(l, rng);
    return detail::fd_check(
        leaves,
        [&]() { return vicreg_node(leaves[0], leaves[1], 25.0, 25.0, 1.0); }, h,
        rng);
  });

  run("traj", 1e-4, opt.trials, [&](Rng& rng) {
    std::vector<Tensor> leaves{Tensor::leaf({1, 64}, true),
                               Tensor::leaf({1, 64}, true),
                               Tensor::leaf({1, 64}, true)};
    for (auto& l : leaves) detail::fill_unit_rows(l, rng);
    const double sign = opt.flip_traj_sign ? -1.0 : 1.0;
    return detail::fd_check(
        leaves, [&]() { return traj_node(leaves[0], leaves[1], leaves[2]); }, h,
        rng, -1, sign);
  });

  // Trajectory loss through the whole encoder stack on a reduced
  // configuration: same code path, small enough for exhaustive differences.
  run("encoder_traj_e2e", 1e-3, opt.deep_trials, [&](Rng& rng) {
    ModelConfig cfg;
    cfg.image_size = 8;
    cfg.widths = {2, 3, 4, 5};
    cfg.feature_dim = 8;
    cfg.projector_hidden = 8;
    cfg.projector_out = 4;
    cfg.compression_hidden = 8;
    Model model = Model::build(cfg, rng.next_u64());

    std::vector<std::vector<float>> images(3);
    for (auto& img : images) {
      img.resize(std::size_t(cfg.image_size) * cfg.image_size);
      for (auto& p : img) p = float(rng.uniform());
    }
    std::vector<Tensor> leaves = model.params.all();
    return detail::fd_check(
        leaves,
        [&]() {
          std::vector<Tensor> feats;
          for (const auto& img : images) {
            feats.push_back(model.encode(img).feature);
          }
          auto norm_row = [](const Tensor& f) {
            return l2_normalize_rows(stack_rows(std::span<const Tensor>(&f, 1)));
          };
          return traj_node(norm_row(feats[0]), norm_row(feats[1]),
                           norm_row(feats[2]));
        },
        h, rng, 12);
  });

  return report;
}

}  // namespace trajssl

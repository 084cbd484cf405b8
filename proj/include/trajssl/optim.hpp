#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "trajssl/errors.hpp"
#include "trajssl/tensor.hpp"

namespace trajssl {

enum class OptKind { sgd_momentum, lars };

struct OptimizerConfig {
  OptKind kind = OptKind::sgd_momentum;
  double lr = 0.05;
  double weight_decay = 0.0;
  double momentum = 0.9;
};

// Momentum SGD with decoupled weight decay, plus a LARS mode that scales the
// base rate per parameter tensor by the trust ratio |w| / (|g| + wd|w| + 1e-9)
// and applies momentum after the scaling. Parameters with zero weight or
// zero gradient norm fall back to trust 1 so zero-initialized biases still
// train. A parameter with no allocated gradient is treated as zero gradient.
class Optimizer {
 public:
  explicit Optimizer(const OptimizerConfig& cfg) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }

  void step(const std::vector<Tensor>& params) {
    if (buffers_.size() != params.size()) {
      buffers_.assign(params.size(), {});
    }
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      const Tensor& p = params[pi];
      auto& w = const_cast<Tensor&>(p).data();
      const auto& g = p.node()->grad;
      const bool has_grad = g.size() == w.size();
      if (has_grad) {
        for (double gv : g) {
          if (!std::isfinite(gv)) {
            throw NumericError("optimizer: non-finite gradient in parameter " +
                               (p.name().empty() ? std::to_string(pi) : p.name()));
          }
        }
      }
      auto& buf = buffers_[pi];
      if (buf.size() != w.size()) buf.assign(w.size(), 0.0);

      if (cfg_.kind == OptKind::sgd_momentum) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gv = has_grad ? g[i] : 0.0;
          buf[i] = cfg_.momentum * buf[i] + gv;
          w[i] -= cfg_.lr * buf[i] + cfg_.lr * cfg_.weight_decay * w[i];
        }
      } else {
        double wn = 0.0, gn = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
          wn += w[i] * w[i];
          if (has_grad) gn += g[i] * g[i];
        }
        wn = std::sqrt(wn);
        gn = std::sqrt(gn);
        const double trust =
            (wn > 0.0 && gn > 0.0) ? wn / (gn + cfg_.weight_decay * wn + 1e-9)
                                   : 1.0;
        const double rate = cfg_.lr * trust;
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gv = (has_grad ? g[i] : 0.0) + cfg_.weight_decay * w[i];
          buf[i] = cfg_.momentum * buf[i] + rate * gv;
          w[i] -= buf[i];
        }
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> buffers_;
};

}  // namespace trajssl

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace trajssl {

namespace detail {
inline std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

// One node of the reverse-mode tape. Nodes are created in topological order
// (a consumer is always created after its inputs), so running backward
// functions in decreasing id order guarantees every node's gradient is
// complete before it is propagated. Summation order is fixed, which keeps
// gradient accumulation bit-reproducible.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first touch, same length as data
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::string name;  // set for named parameters only
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;  // distributes this->grad to parents

  std::size_t numel() const { return data.size(); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Value-semantics handle over a shared tape node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(std::vector<int> shape, bool requires_grad = false,
                     std::string name = {}) {
    auto node = std::make_shared<TensorNode>();
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dimension");
      n *= std::size_t(d);
    }
    node->shape = std::move(shape);
    node->data.assign(n, 0.0);
    node->requires_grad = requires_grad;
    node->id = detail::next_tensor_id();
    node->name = std::move(name);
    return Tensor(std::move(node));
  }

  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false) {
    Tensor t = leaf(std::move(shape), requires_grad);
    if (data.size() != t.numel()) {
      throw std::invalid_argument("Tensor: data length does not match shape");
    }
    t.node_->data = std::move(data);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->numel(); }
  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

  double value() const {
    if (numel() != 1) throw std::invalid_argument("Tensor: not a scalar");
    return node_->data[0];
  }

  void zero_grad() {
    if (!node_->grad.empty()) {
      std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }
  }

  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline Tensor make_op_node(std::vector<int> shape,
                           std::vector<std::shared_ptr<TensorNode>> parents) {
  bool rq = false;
  for (const auto& p : parents) rq = rq || p->requires_grad;
  Tensor t = Tensor::leaf(std::move(shape), rq);
  if (rq) t.node()->parents = std::move(parents);
  return t;
}

}  // namespace detail

// Reverse-mode sweep from `root`, seeded with `seed` (dL/droot). Gradients
// accumulate into every requires_grad node reachable through parent edges;
// repeated sweeps keep accumulating until grads are cleared.
inline void backward(const Tensor& root, std::span<const double> seed) {
  if (!root.requires_grad()) return;
  if (seed.size() != root.numel()) {
    throw std::invalid_argument("backward: seed gradient shape mismatch");
  }
  TensorNode* rn = root.node().get();
  rn->ensure_grad();
  for (std::size_t i = 0; i < seed.size(); ++i) rn->grad[i] += seed[i];

  // Collect the reachable requires_grad subgraph.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{rn};
  seen.insert(rn);
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) {
        stack.push_back(p.get());
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->id > b->id; });
  for (TensorNode* n : order) {
    if (n->backward_fn) n->backward_fn();
  }
}

// Scalar-rooted sweep; the usual entry point for loss graphs.
inline void backward_scalar(const Tensor& root) {
  if (root.numel() != 1) {
    throw std::invalid_argument("backward: output must be scalar");
  }
  const double one = 1.0;
  backward(root, std::span<const double>(&one, 1));
}

// ---------------------------------------------------------------------------
// Operations. Shapes are validated eagerly; every backward uses fixed loop
// order. No operation mutates its inputs.
// ---------------------------------------------------------------------------

// 3x3 convolution, stride 1, zero padding 1. x: [IC,H,W], w: [OC,IC,3,3],
// b: [OC] -> [OC,H,W].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4 || b.shape().size() != 1 ||
      ws[1] != xs[0] || ws[2] != 3 || ws[3] != 3 || b.shape()[0] != ws[0]) {
    throw std::invalid_argument("conv2d: shape mismatch");
  }
  const int ic = xs[0], h = xs[1], wd = xs[2], oc = ws[0];
  Tensor y = detail::make_op_node({oc, h, wd}, {x.node(), w.node(), b.node()});

  const double* xp = x.data().data();
  const double* wp = w.data().data();
  const double* bp = b.data().data();
  double* yp = y.data().data();
  const std::size_t plane = std::size_t(h) * wd;

  for (int o = 0; o < oc; ++o) {
    double* out = yp + o * plane;
    std::fill(out, out + plane, bp[o]);
    for (int c = 0; c < ic; ++c) {
      const double* in = xp + c * plane;
      for (int ki = 0; ki < 3; ++ki) {
        const int i0 = std::max(0, 1 - ki), i1 = std::min(h, h + 1 - ki);
        for (int kj = 0; kj < 3; ++kj) {
          const double wv = wp[((std::size_t(o) * ic + c) * 3 + ki) * 3 + kj];
          const int j0 = std::max(0, 1 - kj), j1 = std::min(wd, wd + 1 - kj);
          for (int i = i0; i < i1; ++i) {
            const double* src = in + std::size_t(i + ki - 1) * wd + (kj - 1);
            double* dst = out + std::size_t(i) * wd;
            for (int j = j0; j < j1; ++j) dst[j] += wv * src[j];
          }
        }
      }
    }
  }

  if (y.requires_grad()) {
    auto xn = x.node(), wn = w.node(), bn = b.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [xn, wn, bn, yn, ic, h, wd, oc, plane]() {
      const double* gy = yn->grad.data();
      const double* xp = xn->data.data();
      const double* wp = wn->data.data();
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int o = 0; o < oc; ++o) {
          double s = 0.0;
          const double* g = gy + o * plane;
          for (std::size_t k = 0; k < plane; ++k) s += g[k];
          bn->grad[o] += s;
        }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (int o = 0; o < oc; ++o) {
          const double* g = gy + o * plane;
          for (int c = 0; c < ic; ++c) {
            const double* in = xp + c * plane;
            for (int ki = 0; ki < 3; ++ki) {
              const int i0 = std::max(0, 1 - ki), i1 = std::min(h, h + 1 - ki);
              for (int kj = 0; kj < 3; ++kj) {
                const int j0 = std::max(0, 1 - kj), j1 = std::min(wd, wd + 1 - kj);
                double s = 0.0;
                for (int i = i0; i < i1; ++i) {
                  const double* src = in + std::size_t(i + ki - 1) * wd + (kj - 1);
                  const double* gr = g + std::size_t(i) * wd;
                  for (int j = j0; j < j1; ++j) s += gr[j] * src[j];
                }
                wn->grad[((std::size_t(o) * ic + c) * 3 + ki) * 3 + kj] += s;
              }
            }
          }
        }
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int o = 0; o < oc; ++o) {
          const double* g = gy + o * plane;
          for (int c = 0; c < ic; ++c) {
            double* gx = xn->grad.data() + c * plane;
            for (int ki = 0; ki < 3; ++ki) {
              const int i0 = std::max(0, 1 - ki), i1 = std::min(h, h + 1 - ki);
              for (int kj = 0; kj < 3; ++kj) {
                const double wv =
                    wp[((std::size_t(o) * ic + c) * 3 + ki) * 3 + kj];
                const int j0 = std::max(0, 1 - kj), j1 = std::min(wd, wd + 1 - kj);
                for (int i = i0; i < i1; ++i) {
                  double* dst = gx + std::size_t(i + ki - 1) * wd + (kj - 1);
                  const double* gr = g + std::size_t(i) * wd;
                  for (int j = j0; j < j1; ++j) dst[j] += wv * gr[j];
                }
              }
            }
          }
        }
      }
    };
  }
  return y;
}

// Rectified linear unit; subgradient at 0 is 0.
inline Tensor relu(const Tensor& x) {
  Tensor y = detail::make_op_node(x.shape(), {x.node()});
  const auto& xd = x.data();
  auto& yd = y.data();
  for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  if (y.requires_grad()) {
    auto xn = x.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [xn, yn]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < xn->data.size(); ++i) {
        if (xn->data[i] > 0.0) xn->grad[i] += yn->grad[i];
      }
    };
  }
  return y;
}

// 2x2 average pooling, stride 2; spatial dims must be even.
inline Tensor avgpool2(const Tensor& x) {
  const auto& xs = x.shape();
  if (xs.size() != 3 || xs[1] % 2 != 0 || xs[2] % 2 != 0) {
    throw std::invalid_argument("avgpool2: need [C,H,W] with even H and W");
  }
  const int c = xs[0], h = xs[1], wd = xs[2], oh = h / 2, ow = wd / 2;
  Tensor y = detail::make_op_node({c, oh, ow}, {x.node()});
  const double* xp = x.data().data();
  double* yp = y.data().data();
  for (int ch = 0; ch < c; ++ch) {
    const double* in = xp + std::size_t(ch) * h * wd;
    double* out = yp + std::size_t(ch) * oh * ow;
    for (int i = 0; i < oh; ++i) {
      const double* r0 = in + std::size_t(2 * i) * wd;
      const double* r1 = r0 + wd;
      for (int j = 0; j < ow; ++j) {
        out[std::size_t(i) * ow + j] =
            0.25 * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
      }
    }
  }
  if (y.requires_grad()) {
    auto xn = x.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [xn, yn, c, h, wd, oh, ow]() {
      xn->ensure_grad();
      for (int ch = 0; ch < c; ++ch) {
        double* gx = xn->grad.data() + std::size_t(ch) * h * wd;
        const double* gy = yn->grad.data() + std::size_t(ch) * oh * ow;
        for (int i = 0; i < oh; ++i) {
          for (int j = 0; j < ow; ++j) {
            const double g = 0.25 * gy[std::size_t(i) * ow + j];
            gx[std::size_t(2 * i) * wd + 2 * j] += g;
            gx[std::size_t(2 * i) * wd + 2 * j + 1] += g;
            gx[std::size_t(2 * i + 1) * wd + 2 * j] += g;
            gx[std::size_t(2 * i + 1) * wd + 2 * j + 1] += g;
          }
        }
      }
    };
  }
  return y;
}

// [C,H,W] -> [C], mean over the spatial plane.
inline Tensor global_avg_pool(const Tensor& x) {
  const auto& xs = x.shape();
  if (xs.size() != 3) throw std::invalid_argument("global_avg_pool: need [C,H,W]");
  const int c = xs[0];
  const std::size_t plane = std::size_t(xs[1]) * xs[2];
  Tensor y = detail::make_op_node({c}, {x.node()});
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    const double* in = x.data().data() + ch * plane;
    for (std::size_t k = 0; k < plane; ++k) s += in[k];
    y.data()[ch] = s / double(plane);
  }
  if (y.requires_grad()) {
    auto xn = x.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [xn, yn, c, plane]() {
      xn->ensure_grad();
      for (int ch = 0; ch < c; ++ch) {
        const double g = yn->grad[ch] / double(plane);
        double* gx = xn->grad.data() + ch * plane;
        for (std::size_t k = 0; k < plane; ++k) gx[k] += g;
      }
    };
  }
  return y;
}

// y = W x + b with x: [I], W: [O,I], b: [O].
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 1 || ws.size() != 2 || ws[1] != xs[0] ||
      b.shape() != std::vector<int>{ws[0]}) {
    throw std::invalid_argument("linear: shape mismatch");
  }
  const int in = xs[0], out = ws[0];
  Tensor y = detail::make_op_node({out}, {x.node(), w.node(), b.node()});
  for (int o = 0; o < out; ++o) {
    const double* wr = w.data().data() + std::size_t(o) * in;
    double s = b.data()[o];
    for (int i = 0; i < in; ++i) s += wr[i] * x.data()[i];
    y.data()[o] = s;
  }
  if (y.requires_grad()) {
    auto xn = x.node(), wn = w.node(), bn = b.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [xn, wn, bn, yn, in, out]() {
      const double* gy = yn->grad.data();
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int o = 0; o < out; ++o) bn->grad[o] += gy[o];
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (int o = 0; o < out; ++o) {
          double* gw = wn->grad.data() + std::size_t(o) * in;
          const double g = gy[o];
          for (int i = 0; i < in; ++i) gw[i] += g * xn->data[i];
        }
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int o = 0; o < out; ++o) {
          const double* wr = wn->data.data() + std::size_t(o) * in;
          const double g = gy[o];
          for (int i = 0; i < in; ++i) xn->grad[i] += g * wr[i];
        }
      }
    };
  }
  return y;
}

// Row-batched linear map: X: [B,I], W: [O,I], b: [O] -> [B,O].
inline Tensor linear_rows(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || ws[1] != xs[1] ||
      b.shape() != std::vector<int>{ws[0]}) {
    throw std::invalid_argument("linear_rows: shape mismatch");
  }
  const int bt = xs[0], in = xs[1], out = ws[0];
  Tensor y = detail::make_op_node({bt, out}, {x.node(), w.node(), b.node()});
  for (int r = 0; r < bt; ++r) {
    const double* xr = x.data().data() + std::size_t(r) * in;
    double* yr = y.data().data() + std::size_t(r) * out;
    for (int o = 0; o < out; ++o) {
      const double* wr = w.data().data() + std::size_t(o) * in;
      double s = b.data()[o];
      for (int i = 0; i < in; ++i) s += wr[i] * xr[i];
      yr[o] = s;
    }
  }
  if (y.requires_grad()) {
    auto xn = x.node(), wn = w.node(), bn = b.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [xn, wn, bn, yn, bt, in, out]() {
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int r = 0; r < bt; ++r) {
          const double* gy = yn->grad.data() + std::size_t(r) * out;
          for (int o = 0; o < out; ++o) bn->grad[o] += gy[o];
        }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (int r = 0; r < bt; ++r) {
          const double* gy = yn->grad.data() + std::size_t(r) * out;
          const double* xr = xn->data.data() + std::size_t(r) * in;
          for (int o = 0; o < out; ++o) {
            double* gw = wn->grad.data() + std::size_t(o) * in;
            const double g = gy[o];
            for (int i = 0; i < in; ++i) gw[i] += g * xr[i];
          }
        }
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int r = 0; r < bt; ++r) {
          const double* gy = yn->grad.data() + std::size_t(r) * out;
          double* gx = xn->grad.data() + std::size_t(r) * in;
          for (int o = 0; o < out; ++o) {
            const double* wr = wn->data.data() + std::size_t(o) * in;
            const double g = gy[o];
            for (int i = 0; i < in; ++i) gx[i] += g * wr[i];
          }
        }
      }
    };
  }
  return y;
}

// Stack B vectors of equal length into a [B,I] matrix.
inline Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
  const auto& s0 = rows[0].shape();
  if (s0.size() != 1) throw std::invalid_argument("stack_rows: rows must be vectors");
  const int in = s0[0];
  const int bt = int(rows.size());
  std::vector<std::shared_ptr<TensorNode>> parents;
  parents.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.shape() != s0) throw std::invalid_argument("stack_rows: ragged rows");
    parents.push_back(r.node());
  }
  Tensor y = detail::make_op_node({bt, in}, std::move(parents));
  for (int r = 0; r < bt; ++r) {
    std::copy(rows[r].data().begin(), rows[r].data().end(),
              y.data().begin() + std::size_t(r) * in);
  }
  if (y.requires_grad()) {
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [yn, in]() {
      for (std::size_t r = 0; r < yn->parents.size(); ++r) {
        auto& p = yn->parents[r];
        if (!p->requires_grad) continue;
        p->ensure_grad();
        const double* gy = yn->grad.data() + r * std::size_t(in);
        for (int i = 0; i < in; ++i) p->grad[i] += gy[i];
      }
    };
  }
  return y;
}

// Row-wise L2 normalization with an epsilon floor on the norm.
inline Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12) {
  const auto& xs = x.shape();
  if (xs.size() != 2) throw std::invalid_argument("l2_normalize_rows: need [B,I]");
  const int bt = xs[0], in = xs[1];
  Tensor y = detail::make_op_node(xs, {x.node()});
  std::vector<double> norms(std::size_t(bt));
  for (int r = 0; r < bt; ++r) {
    const double* xr = x.data().data() + std::size_t(r) * in;
    double s = 0.0;
    for (int i = 0; i < in; ++i) s += xr[i] * xr[i];
    const double n = std::max(std::sqrt(s), eps);
    norms[std::size_t(r)] = n;
    double* yr = y.data().data() + std::size_t(r) * in;
    for (int i = 0; i < in; ++i) yr[i] = xr[i] / n;
  }
  if (y.requires_grad()) {
    auto xn = x.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [xn, yn, bt, in, norms]() {
      xn->ensure_grad();
      for (int r = 0; r < bt; ++r) {
        const double* gy = yn->grad.data() + std::size_t(r) * in;
        const double* yr = yn->data.data() + std::size_t(r) * in;
        double* gx = xn->grad.data() + std::size_t(r) * in;
        const double n = norms[std::size_t(r)];
        double gyy = 0.0;
        for (int i = 0; i < in; ++i) gyy += gy[i] * yr[i];
        for (int i = 0; i < in; ++i) gx[i] += (gy[i] - gyy * yr[i]) / n;
      }
    };
  }
  return y;
}

// Reshape to a flat vector; data copied, gradient copied back.
inline Tensor flatten(const Tensor& x) {
  Tensor y = detail::make_op_node({int(x.numel())}, {x.node()});
  y.data() = x.data();
  if (y.requires_grad()) {
    auto xn = x.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [xn, yn]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += yn->grad[i];
    };
  }
  return y;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
  Tensor y = detail::make_op_node(a.shape(), {a.node(), b.node()});
  for (std::size_t i = 0; i < a.numel(); ++i) y.data()[i] = a.data()[i] + b.data()[i];
  if (y.requires_grad()) {
    auto an = a.node(), bn = b.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [an, bn, yn]() {
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        n->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) n->grad[i] += yn->grad[i];
      }
    };
  }
  return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("mul: shape mismatch");
  Tensor y = detail::make_op_node(a.shape(), {a.node(), b.node()});
  for (std::size_t i = 0; i < a.numel(); ++i) y.data()[i] = a.data()[i] * b.data()[i];
  if (y.requires_grad()) {
    auto an = a.node(), bn = b.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [an, bn, yn]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) {
          an->grad[i] += yn->grad[i] * bn->data[i];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < yn->grad.size(); ++i) {
          bn->grad[i] += yn->grad[i] * an->data[i];
        }
      }
    };
  }
  return y;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor y = detail::make_op_node(a.shape(), {a.node()});
  for (std::size_t i = 0; i < a.numel(); ++i) y.data()[i] = s * a.data()[i];
  if (y.requires_grad()) {
    auto an = a.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [an, yn, s]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += s * yn->grad[i];
    };
  }
  return y;
}

inline Tensor sum(const Tensor& a) {
  Tensor y = detail::make_op_node({1}, {a.node()});
  double s = 0.0;
  for (double v : a.data()) s += v;
  y.data()[0] = s;
  if (y.requires_grad()) {
    auto an = a.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [an, yn]() {
      an->ensure_grad();
      const double g = yn->grad[0];
      for (auto& gi : an->grad) gi += g;
    };
  }
  return y;
}

// total = a + lambda * b for scalar tensors; the Eq-3 style combination.
inline Tensor add_scaled(const Tensor& a, const Tensor& b, double lambda) {
  if (a.numel() != 1 || b.numel() != 1) {
    throw std::invalid_argument("add_scaled: scalar inputs required");
  }
  Tensor y = detail::make_op_node({1}, {a.node(), b.node()});
  y.data()[0] = a.data()[0] + lambda * b.data()[0];
  if (y.requires_grad()) {
    auto an = a.node(), bn = b.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [an, bn, yn, lambda]() {
      if (an->requires_grad) {
        an->ensure_grad();
        an->grad[0] += yn->grad[0];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        bn->grad[0] += lambda * yn->grad[0];
      }
    };
  }
  return y;
}

}  // namespace trajssl

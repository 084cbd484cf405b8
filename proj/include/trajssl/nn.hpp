#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "trajssl/errors.hpp"
#include "trajssl/losses.hpp"
#include "trajssl/rng.hpp"
#include "trajssl/tensor.hpp"

namespace trajssl {

// Ordered collection of named parameter tensors. Iteration order is the
// registration order, which fixes the optimizer and checkpoint ordering.
class ParamStore {
 public:
  Tensor add(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) {
      throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    }
    Tensor t = Tensor::leaf(std::move(shape), true, name);
    index_[name] = params_.size();
    params_.push_back(t);
    return t;
  }

  Tensor get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::invalid_argument("ParamStore: unknown parameter " + name);
    }
    return params_[it->second];
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<Tensor>& all() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor> params_;
  std::map<std::string, std::size_t> index_;
};

// Initialization is a pure function of (seed, parameter name): weights are
// uniform with fan-in scaling, biases zero. Keying by name keeps the draw
// independent of registration order.
inline void init_params(ParamStore& store, std::uint64_t seed) {
  for (auto& p : store.all()) {
    const auto& shape = p.shape();
    auto& data = p.data();
    if (shape.size() == 1) {
      std::fill(data.begin(), data.end(), 0.0);
      continue;
    }
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= std::size_t(shape[d]);
    const double bound = 1.0 / std::sqrt(double(fan_in));
    Rng rng = Rng::stream(seed, "init", fnv1a64(p.name()));
    for (auto& v : data) v = rng.uniform(-bound, bound);
  }
}

enum class HeadKind { projector, compression, linear_probe, relpose_probe };

// MLP head geometry. Projector, compression and relpose_probe heads have
// exactly one hidden layer; linear_probe is a single map.
struct HeadSpec {
  HeadKind kind = HeadKind::projector;
  int in_dim = 0;
  int hidden_dim = 0;
  int out_dim = 0;
};

inline void register_head(ParamStore& store, const std::string& prefix,
                          const HeadSpec& spec) {
  if (spec.kind == HeadKind::linear_probe) {
    store.add(prefix + ".fc.w", {spec.out_dim, spec.in_dim});
    store.add(prefix + ".fc.b", {spec.out_dim});
  } else {
    store.add(prefix + ".fc1.w", {spec.hidden_dim, spec.in_dim});
    store.add(prefix + ".fc1.b", {spec.hidden_dim});
    store.add(prefix + ".fc2.w", {spec.out_dim, spec.hidden_dim});
    store.add(prefix + ".fc2.b", {spec.out_dim});
  }
}

// Applies a head to a [B, in_dim] batch.
inline Tensor head_forward_rows(const ParamStore& store,
                                const std::string& prefix, const HeadSpec& spec,
                                const Tensor& rows) {
  if (rows.shape().size() != 2 || rows.shape()[1] != spec.in_dim) {
    throw std::invalid_argument("head_forward_rows: input dim mismatch for " +
                                prefix);
  }
  if (spec.kind == HeadKind::linear_probe) {
    return linear_rows(rows, store.get(prefix + ".fc.w"),
                       store.get(prefix + ".fc.b"));
  }
  Tensor h = relu(linear_rows(rows, store.get(prefix + ".fc1.w"),
                              store.get(prefix + ".fc1.b")));
  return linear_rows(h, store.get(prefix + ".fc2.w"),
                     store.get(prefix + ".fc2.b"));
}

// Encoder and head dimensions. Spatial size halves at each of the four
// blocks; the pooled feature is a linear map of the block4 global average.
struct ModelConfig {
  int image_size = 32;
  std::array<int, 4> widths{8, 16, 32, 64};
  int feature_dim = 64;
  int projector_hidden = 64;
  int projector_out = 32;
  int compression_hidden = 64;

  int tap_side(int block) const {  // block in 1..4
    int s = image_size;
    for (int i = 0; i < block; ++i) s /= 2;
    return s;
  }
  int tap_dim(int block) const {
    const int s = tap_side(block);
    return widths[std::size_t(block - 1)] * s * s;
  }
};

// Per-image forward taps. block1..block4 are the post-pool feature maps,
// feature is the pooled-and-projected vector z.
struct EncoderTaps {
  Tensor block1, block2, block3, block4, feature;
};

struct Model {
  ModelConfig cfg;
  ParamStore params;

  HeadSpec projector_spec() const {
    return {HeadKind::projector, cfg.feature_dim, cfg.projector_hidden,
            cfg.projector_out};
  }
  HeadSpec compression_spec(int block) const {
    return {HeadKind::compression, cfg.tap_dim(block), cfg.compression_hidden,
            cfg.feature_dim};
  }

  static Model build(const ModelConfig& cfg, std::uint64_t seed) {
    Model m;
    m.cfg = cfg;
    int in_ch = 1;
    for (int bidx = 0; bidx < 4; ++bidx) {
      const std::string p = "enc.conv" + std::to_string(bidx + 1);
      m.params.add(p + ".w", {cfg.widths[std::size_t(bidx)], in_ch, 3, 3});
      m.params.add(p + ".b", {cfg.widths[std::size_t(bidx)]});
      in_ch = cfg.widths[std::size_t(bidx)];
    }
    m.params.add("enc.fc.w", {cfg.feature_dim, cfg.widths[3]});
    m.params.add("enc.fc.b", {cfg.feature_dim});
    register_head(m.params, "proj", m.projector_spec());
    register_head(m.params, "comp3", m.compression_spec(3));
    register_head(m.params, "comp4", m.compression_spec(4));
    init_params(m.params, seed);
    return m;
  }

  // image: row-major grayscale in [0,1], image_size^2 entries.
  EncoderTaps encode(std::span<const float> image) const {
    const int s = cfg.image_size;
    if (int(image.size()) != s * s) {
      throw std::invalid_argument("encode: image size mismatch");
    }
    std::vector<double> px(image.begin(), image.end());
    Tensor x = Tensor::from_data({1, s, s}, std::move(px));
    EncoderTaps taps;
    Tensor cur = x;
    for (int bidx = 0; bidx < 4; ++bidx) {
      const std::string p = "enc.conv" + std::to_string(bidx + 1);
      cur = avgpool2(relu(conv2d(cur, params.get(p + ".w"), params.get(p + ".b"))));
      (bidx == 0   ? taps.block1
       : bidx == 1 ? taps.block2
       : bidx == 2 ? taps.block3
                   : taps.block4) = cur;
    }
    taps.feature = linear(global_avg_pool(cur), params.get("enc.fc.w"),
                          params.get("enc.fc.b"));
    return taps;
  }

  Tensor projector_rows(const Tensor& feature_rows) const {
    return head_forward_rows(params, "proj", projector_spec(), feature_rows);
  }

  Tensor compression_rows(const Tensor& tap_rows, int block) const {
    if (block != 3 && block != 4) {
      throw std::invalid_argument("compression_rows: block must be 3 or 4");
    }
    return head_forward_rows(params, block == 3 ? "comp3" : "comp4",
                             compression_spec(block), tap_rows);
  }
};

// ---------------------------------------------------------------------------
// Loss graph nodes. The analytic-gradient losses plug into the tape as
// scalar nodes whose backward distributes the cached gradients.
// ---------------------------------------------------------------------------

inline Mat rows_as_mat(const Tensor& t) {
  if (t.shape().size() != 2) throw std::invalid_argument("rows_as_mat: need [B,K]");
  Mat m(t.shape()[0], t.shape()[1]);
  m.data = t.data();
  return m;
}

namespace detail {
inline Tensor batch_loss_node(const Tensor& za, const Tensor& zb,
                              BatchLoss loss) {
  Tensor y = make_op_node({1}, {za.node(), zb.node()});
  y.data()[0] = loss.value;
  if (y.requires_grad()) {
    auto an = za.node(), bn = zb.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [an, bn, yn, l = std::move(loss)]() {
      const double g = yn->grad[0];
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < l.grad_a.data.size(); ++i) {
          an->grad[i] += g * l.grad_a.data[i];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < l.grad_b.data.size(); ++i) {
          bn->grad[i] += g * l.grad_b.data[i];
        }
      }
    };
  }
  return y;
}
}  // namespace detail

inline Tensor ntxent_node(const Tensor& za, const Tensor& zb,
                          double temperature) {
  return detail::batch_loss_node(
      za, zb, ntxent_loss(rows_as_mat(za), rows_as_mat(zb), temperature));
}

inline Tensor vicreg_node(const Tensor& za, const Tensor& zb, double sim_coeff,
                          double var_coeff, double cov_coeff) {
  return detail::batch_loss_node(
      za, zb,
      vicreg_loss(rows_as_mat(za), rows_as_mat(zb), sim_coeff, var_coeff,
                  cov_coeff));
}

// Mean trajectory loss over a batch of row-aligned triplets.
inline Tensor traj_node(const Tensor& zl, const Tensor& zc, const Tensor& zr,
                        double eps = 1e-8) {
  if (zl.shape() != zc.shape() || zl.shape() != zr.shape() ||
      zl.shape().size() != 2) {
    throw std::invalid_argument("traj_node: need matching [B,K] inputs");
  }
  const int b = zl.shape()[0];
  const int k = zl.shape()[1];
  Mat gl(b, k), gc(b, k), gr(b, k);
  double value = 0.0;
  for (int r = 0; r < b; ++r) {
    auto row = [&](const Tensor& t) {
      return std::span<const double>(t.data().data() + std::size_t(r) * k,
                                     std::size_t(k));
    };
    TripletLoss tl = traj_loss(row(zl), row(zc), row(zr), eps);
    value += tl.value;
    std::copy(tl.grad_left.begin(), tl.grad_left.end(), gl.row(r));
    std::copy(tl.grad_center.begin(), tl.grad_center.end(), gc.row(r));
    std::copy(tl.grad_right.begin(), tl.grad_right.end(), gr.row(r));
  }
  value /= double(b);

  Tensor y = detail::make_op_node({1}, {zl.node(), zc.node(), zr.node()});
  y.data()[0] = value;
  if (y.requires_grad()) {
    auto ln = zl.node(), cn = zc.node(), rn = zr.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [ln, cn, rn, yn, b, gl = std::move(gl),
                             gc = std::move(gc), gr = std::move(gr)]() {
      const double g = yn->grad[0] / double(b);
      auto push = [&](const std::shared_ptr<TensorNode>& n, const Mat& m) {
        if (!n->requires_grad) return;
        n->ensure_grad();
        for (std::size_t i = 0; i < m.data.size(); ++i) n->grad[i] += g * m.data[i];
      };
      push(ln, gl);
      push(cn, gc);
      push(rn, gr);
    };
  }
  return y;
}

// Mean softmax cross-entropy over rows of logits against integer labels.
inline Tensor softmax_ce_node(const Tensor& logits,
                              const std::vector<int>& labels) {
  if (logits.shape().size() != 2 || int(labels.size()) != logits.shape()[0]) {
    throw std::invalid_argument("softmax_ce_node: shape mismatch");
  }
  const int b = logits.shape()[0];
  const int k = logits.shape()[1];
  Mat soft(b, k);
  double loss = 0.0;
  for (int r = 0; r < b; ++r) {
    const double* lr = logits.data().data() + std::size_t(r) * k;
    if (labels[std::size_t(r)] < 0 || labels[std::size_t(r)] >= k) {
      throw std::invalid_argument("softmax_ce_node: label out of range");
    }
    double mx = lr[0];
    for (int c = 1; c < k; ++c) mx = std::max(mx, lr[c]);
    double denom = 0.0;
    for (int c = 0; c < k; ++c) denom += std::exp(lr[c] - mx);
    for (int c = 0; c < k; ++c) soft.at(r, c) = std::exp(lr[c] - mx) / denom;
    loss += -(lr[labels[std::size_t(r)]] - mx) + std::log(denom);
  }
  loss /= double(b);

  Tensor y = detail::make_op_node({1}, {logits.node()});
  y.data()[0] = loss;
  if (y.requires_grad()) {
    auto xn = logits.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [xn, yn, b, k, labels, soft = std::move(soft)]() {
      xn->ensure_grad();
      const double g = yn->grad[0] / double(b);
      for (int r = 0; r < b; ++r) {
        double* gx = xn->grad.data() + std::size_t(r) * k;
        for (int c = 0; c < k; ++c) {
          gx[c] += g * (soft.at(r, c) - (c == labels[std::size_t(r)] ? 1.0 : 0.0));
        }
      }
    };
  }
  return y;
}

// Mean squared error over all elements against a constant target.
inline Tensor mse_node(const Tensor& pred, const Mat& target) {
  if (pred.shape().size() != 2 || pred.shape()[0] != target.rows ||
      pred.shape()[1] != target.cols) {
    throw std::invalid_argument("mse_node: shape mismatch");
  }
  const std::size_t n = pred.numel();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.data()[i] - target.data[i];
    loss += d * d;
  }
  loss /= double(n);

  Tensor y = detail::make_op_node({1}, {pred.node()});
  y.data()[0] = loss;
  if (y.requires_grad()) {
    auto xn = pred.node();
    TensorNode* yn = y.node().get();
    y.node()->backward_fn = [xn, yn, n, t = target.data]() {
      xn->ensure_grad();
      const double g = 2.0 * yn->grad[0] / double(n);
      for (std::size_t i = 0; i < n; ++i) {
        xn->grad[i] += g * (xn->data[i] - t[i]);
      }
    };
  }
  return y;
}

}  // namespace trajssl

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "trajssl/checkpoint.hpp"
#include "trajssl/config.hpp"
#include "trajssl/dataset.hpp"
#include "trajssl/metrics.hpp"
#include "trajssl/nn.hpp"
#include "trajssl/optim.hpp"

namespace trajssl {

// ---------------------------------------------------------------------------
// SSL training
// ---------------------------------------------------------------------------

struct EpochRow {
  int epoch = 0;
  double sem = 0.0;
  double traj = 0.0;
  double total = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochRow> history;
};

namespace detail {

struct TrainInstance {
  int family_id = 0;
  int instance_idx = 0;
  int uid = 0;
};

inline std::vector<TrainInstance> train_roster(const DatasetManifest& manifest) {
  std::vector<TrainInstance> roster;
  for (int fid : manifest.family_ids(true)) {
    const auto& fam = manifest.family(fid);
    for (int idx : fam.train_instances) {
      roster.push_back({fid, idx, manifest.instance_uid(fid, idx)});
    }
  }
  return roster;
}

inline int traj_tap_block(const std::string& traj_layer) {
  if (traj_layer == "feature") return 0;
  if (traj_layer == "conv3") return 3;
  if (traj_layer == "conv4") return 4;
  throw ConfigError("train: unknown traj_layer " + traj_layer);
}

// The training loop. The trajectory branch is a compile-time parameter:
// the <false> instantiation contains no trajectory-loss code at all, which
// is what makes the lambda = 0 run a pure invariant-SSL baseline. Both
// instantiations draw identical random streams (all streams are keyed by
// purpose and indices, and rendering consumes no randomness), so paired
// runs share batches, triplet centers and augmentations exactly.
template <bool TrajEnabled>
TrainResult train_ssl_impl(const RunConfig& cfg, const DatasetManifest& manifest) {
  if (TrajEnabled && cfg.train.lambda == 0.0) {
    throw ConfigError("train: trajectory branch requires lambda > 0");
  }
  TrainResult result;
  result.model = Model::build(cfg.model, cfg.seed);
  Model& model = result.model;
  Optimizer opt(cfg.train.optimizer_config());
  SampleSource source(manifest);

  const auto roster = train_roster(manifest);
  if (roster.empty()) throw ConfigError("train: empty training roster");
  const int bs = cfg.train.batch_size;
  const int reps = std::max(1, cfg.train.triplets_per_instance);
  const int traj_block = traj_tap_block(cfg.train.traj_layer);

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::vector<int> order;
    order.reserve(roster.size() * std::size_t(reps));
    for (int rep = 0; rep < reps; ++rep) {
      for (std::size_t i = 0; i < roster.size(); ++i) order.push_back(int(i));
    }
    Rng order_rng = Rng::stream(cfg.seed, "batch", std::uint64_t(epoch));
    shuffle(order, order_rng);

    std::size_t n_steps = order.size() / std::size_t(bs);
    std::size_t step_size = std::size_t(bs);
    if (n_steps == 0) {
      if (order.size() < 2) throw ConfigError("train: batch has fewer than 2 items");
      n_steps = 1;
      step_size = order.size();
    }

    std::map<int, int> occurrence;  // uid -> draws so far this epoch
    EpochRow row{epoch, 0.0, 0.0, 0.0};

    for (std::size_t step = 0; step < n_steps; ++step) {
      std::vector<Tensor> view_a, view_b;
      [[maybe_unused]] std::vector<Tensor> traj_l, traj_c, traj_r;

      for (std::size_t s = 0; s < step_size; ++s) {
        const TrainInstance& inst = roster[std::size_t(order[step * step_size + s])];
        const int occ = occurrence[inst.uid]++;
        const std::uint64_t draw_key =
            std::uint64_t(epoch) * std::uint64_t(reps) + std::uint64_t(occ);

        Rng triplet_rng = Rng::stream(cfg.seed, "triplet",
                                      std::uint64_t(inst.uid), draw_key);
        const TripletPoses poses = sample_triplet_poses(
            manifest, triplet_rng, manifest.config.triplet_mode);

        const Image center =
            source.render_at(inst.family_id, inst.instance_idx, poses.center);
        Rng aug_a = Rng::stream(cfg.seed, "aug_a", std::uint64_t(inst.uid), draw_key);
        Rng aug_b = Rng::stream(cfg.seed, "aug_b", std::uint64_t(inst.uid), draw_key);
        const Image img_a = augment(center, aug_a);
        const Image img_b = augment(center, aug_b);
        view_a.push_back(model.encode(img_a.pixels).feature);
        view_b.push_back(model.encode(img_b.pixels).feature);

        if constexpr (TrajEnabled) {
          auto tap = [&](const Pose& p) {
            const Image img =
                source.render_at(inst.family_id, inst.instance_idx, p);
            EncoderTaps taps = model.encode(img.pixels);
            if (traj_block == 0) return taps.feature;
            return flatten(traj_block == 3 ? taps.block3 : taps.block4);
          };
          traj_l.push_back(tap(poses.left));
          traj_c.push_back(tap(poses.center));
          traj_r.push_back(tap(poses.right));
        }
      }

      Tensor za = model.projector_rows(stack_rows(std::span<const Tensor>(view_a)));
      Tensor zb = model.projector_rows(stack_rows(std::span<const Tensor>(view_b)));
      Tensor sem =
          cfg.train.semantic_loss == "ntxent"
              ? ntxent_node(l2_normalize_rows(za), l2_normalize_rows(zb),
                            cfg.train.temperature)
              : vicreg_node(za, zb, cfg.train.vicreg_sim, cfg.train.vicreg_var,
                            cfg.train.vicreg_cov);

      Tensor total = sem;
      double traj_value = 0.0;
      if constexpr (TrajEnabled) {
        auto rows = [&](std::vector<Tensor>& v) {
          Tensor stacked = stack_rows(std::span<const Tensor>(v));
          if (traj_block != 0) {
            stacked = model.compression_rows(stacked, traj_block);
          }
          return l2_normalize_rows(stacked);
        };
        Tensor traj = traj_node(rows(traj_l), rows(traj_c), rows(traj_r),
                                cfg.train.traj_eps);
        traj_value = traj.value();
        total = add_scaled(sem, traj, cfg.train.lambda);
      }

      if (!std::isfinite(total.value())) {
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch) + " step " + std::to_string(step) +
                           " (sem=" + std::to_string(sem.value()) +
                           ", traj=" + std::to_string(traj_value) + ")");
      }
      model.params.zero_grad();
      backward_scalar(total);
      opt.step(model.params.all());

      row.sem += sem.value();
      row.traj += traj_value;
      row.total += total.value();
    }
    row.sem /= double(n_steps);
    row.traj /= double(n_steps);
    row.total /= double(n_steps);
    result.history.push_back(row);
  }
  return result;
}

}  // namespace detail

// lambda = 0 dispatches to the instantiation with the trajectory branch
// compiled out, so the baseline run never touches trajectory code.
inline TrainResult train_ssl(const RunConfig& cfg, const DatasetManifest& manifest) {
  if (cfg.train.lambda == 0.0) {
    return detail::train_ssl_impl<false>(cfg, manifest);
  }
  return detail::train_ssl_impl<true>(cfg, manifest);
}

// The compiled-out baseline path, callable directly for the purity check.
inline TrainResult train_ssl_without_traj_branch(const RunConfig& cfg,
                                                 const DatasetManifest& manifest) {
  return detail::train_ssl_impl<false>(cfg, manifest);
}

inline std::string history_csv(const std::vector<EpochRow>& history) {
  std::string out = "epoch,sem_loss,traj_loss,total\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%.9f\n", r.epoch, r.sem, r.traj,
                  r.total);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Representation extraction
// ---------------------------------------------------------------------------

struct RepCoord {
  int family_id = 0;
  int instance_idx = 0;
  int pose_idx = 0;
};

struct RepSet {
  Mat reps;
  std::vector<RepCoord> coords;
  std::vector<Pose> poses;  // aligned with rows
};

inline const std::vector<std::string>& valid_layers() {
  static const std::vector<std::string> layers = {
      "feature",          "conv3",    "conv4",    "compressed_conv3",
      "compressed_conv4", "patch_m1", "patch_m3", "patch_m4"};
  return layers;
}

inline int layer_dim(const ModelConfig& cfg, const std::string& layer) {
  if (layer == "feature") return cfg.feature_dim;
  if (layer == "conv3") return cfg.tap_dim(3);
  if (layer == "conv4") return cfg.tap_dim(4);
  if (layer == "compressed_conv3" || layer == "compressed_conv4") {
    return cfg.feature_dim;
  }
  if (layer == "patch_m1") return cfg.feature_dim;
  if (layer == "patch_m3") return 9 * cfg.feature_dim;
  if (layer == "patch_m4") return 16 * cfg.feature_dim;
  std::string names;
  for (const auto& l : valid_layers()) names += (names.empty() ? "" : ", ") + l;
  throw ConfigError("unknown layer `" + layer + "` (valid: " + names + ")");
}

namespace detail {

// Splits the image into m x m equal regions, re-rasterizes each to the
// encoder input size, and concatenates the pooled features in row-major
// patch order.
inline void patch_embedding(const Model& model, const Image& img, int m,
                            double* out) {
  const int size = model.cfg.image_size;
  const double cell = double(img.width) / double(m);
  int offset = 0;
  for (int gy = 0; gy < m; ++gy) {
    for (int gx = 0; gx < m; ++gx) {
      const Image patch =
          resample_region(img, gx * cell, gy * cell, cell, cell, size);
      const EncoderTaps taps = model.encode(patch.pixels);
      const auto& f = taps.feature.data();
      std::copy(f.begin(), f.end(), out + offset);
      offset += int(f.size());
    }
  }
}

inline void layer_representation(const Model& model, const Image& img,
                                 const std::string& layer, double* out) {
  if (layer == "patch_m1" || layer == "patch_m3" || layer == "patch_m4") {
    patch_embedding(model, img, layer == "patch_m1" ? 1 : layer == "patch_m3" ? 3 : 4,
                    out);
    return;
  }
  const EncoderTaps taps = model.encode(img.pixels);
  if (layer == "feature") {
    const auto& f = taps.feature.data();
    std::copy(f.begin(), f.end(), out);
    return;
  }
  if (layer == "conv3" || layer == "conv4") {
    const auto& t = (layer == "conv3" ? taps.block3 : taps.block4).data();
    std::copy(t.begin(), t.end(), out);
    return;
  }
  if (layer == "compressed_conv3" || layer == "compressed_conv4") {
    const int block = layer == "compressed_conv3" ? 3 : 4;
    Tensor tap = flatten(block == 3 ? taps.block3 : taps.block4);
    Tensor compressed = model.compression_rows(
        stack_rows(std::span<const Tensor>(&tap, 1)), block);
    const auto& c = compressed.data();
    std::copy(c.begin(), c.end(), out);
    return;
  }
  layer_dim(model.cfg, layer);  // throws with the valid-name list
}

}  // namespace detail

// Rows are ordered (family, instance, pose) lexicographically in the order
// the ids are passed; deterministic for a given checkpoint and subset.
inline RepSet extract_representations(const Model& model,
                                      const DatasetManifest& manifest,
                                      SampleSource& source,
                                      const std::vector<int>& family_ids,
                                      bool train_split, bool in_domain_poses,
                                      const std::string& layer) {
  const auto& poses = manifest.pose_set(in_domain_poses);
  const int dim = layer_dim(model.cfg, layer);

  std::vector<RepCoord> coords;
  for (int fid : family_ids) {
    const auto& fam = manifest.family(fid);
    const auto& split = train_split ? fam.train_instances : fam.test_instances;
    for (int idx : split) {
      for (int p = 0; p < int(poses.size()); ++p) coords.push_back({fid, idx, p});
    }
  }

  RepSet set;
  set.reps = Mat(int(coords.size()), dim);
  set.coords = coords;
  set.poses.reserve(coords.size());
  for (std::size_t r = 0; r < coords.size(); ++r) {
    const auto& c = coords[r];
    const Pose& pose = poses[std::size_t(c.pose_idx)];
    set.poses.push_back(pose);
    const Image img = source.render_at(c.family_id, c.instance_idx, pose);
    detail::layer_representation(model, img, layer, set.reps.row(int(r)));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Weighted k-NN absolute pose
// ---------------------------------------------------------------------------

// Cosine-similarity weighted vote: the k nearest gallery rows vote for
// their class with weight exp(sim / temperature); ties in the argmax break
// toward the lowest class index. Neighbor selection orders by (similarity
// desc, gallery index asc).
inline std::vector<int> knn_predict(const Mat& gallery,
                                    const std::vector<int>& gallery_labels,
                                    const Mat& queries, int k, double temperature,
                                    int n_classes) {
  if (k < 1 || k > gallery.rows) {
    throw ConfigError("knn: k must be in [1, gallery size]");
  }
  if (int(gallery_labels.size()) != gallery.rows) {
    throw ConfigError("knn: label count mismatch");
  }
  Mat g = gallery;
  Mat q = queries;
  l2_normalize_rows(g);
  l2_normalize_rows(q);

  std::vector<int> pred(std::size_t(q.rows));
  std::vector<double> sims(std::size_t(g.rows));
  std::vector<int> idx(std::size_t(g.rows));
  std::vector<double> votes(std::size_t(n_classes));
  for (int r = 0; r < q.rows; ++r) {
    for (int i = 0; i < g.rows; ++i) sims[std::size_t(i)] = dot(g.row_span(i), q.row_span(r));
    for (int i = 0; i < g.rows; ++i) idx[std::size_t(i)] = i;
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](int a, int b) {
                        if (sims[std::size_t(a)] != sims[std::size_t(b)]) {
                          return sims[std::size_t(a)] > sims[std::size_t(b)];
                        }
                        return a < b;
                      });
    std::fill(votes.begin(), votes.end(), 0.0);
    for (int n = 0; n < k; ++n) {
      const int gi = idx[std::size_t(n)];
      const int cls = gallery_labels[std::size_t(gi)];
      votes[std::size_t(cls)] += std::exp(sims[std::size_t(gi)] / temperature);
    }
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (votes[std::size_t(c)] > votes[std::size_t(best)]) best = c;
    }
    pred[std::size_t(r)] = best;
  }
  return pred;
}

// ---------------------------------------------------------------------------
// Probes on frozen representations
// ---------------------------------------------------------------------------

struct ProbeConfig {
  int epochs = 20;
  int batch = 128;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  std::string tag;  // stream namespace, e.g. the scenario name
};

namespace detail {

inline Tensor const_rows(const Mat& m) {
  std::vector<double> data = m.data;
  return Tensor::from_data({m.rows, m.cols}, std::move(data));
}

inline Mat predict_rows(const ParamStore& store, const HeadSpec& spec,
                        const Mat& x, int batch) {
  Mat out(x.rows, spec.out_dim);
  for (int start = 0; start < x.rows; start += batch) {
    const int b = std::min(batch, x.rows - start);
    Mat chunk(b, x.cols);
    std::copy(x.data.begin() + std::size_t(start) * x.cols,
              x.data.begin() + std::size_t(start + b) * x.cols,
              chunk.data.begin());
    Tensor y = head_forward_rows(store, "probe", spec, const_rows(chunk));
    std::copy(y.data().begin(), y.data().end(),
              out.data.begin() + std::size_t(start) * spec.out_dim);
  }
  return out;
}

template <typename LossFn>
void probe_fit(ParamStore& store, const HeadSpec& spec, const Mat& x,
               const ProbeConfig& cfg, LossFn&& batch_loss) {
  Optimizer opt({OptKind::sgd_momentum, cfg.lr, 0.0, cfg.momentum});
  std::vector<int> order(std::size_t(x.rows));
  for (int i = 0; i < x.rows; ++i) order[std::size_t(i)] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng::stream(cfg.seed, "probe_order/" + cfg.tag, std::uint64_t(epoch));
    shuffle(order, rng);
    for (int start = 0; start < x.rows; start += cfg.batch) {
      const int b = std::min(cfg.batch, x.rows - start);
      if (b < 2) break;
      Mat chunk(b, x.cols);
      std::vector<int> rows(std::size_t(b));
      for (int i = 0; i < b; ++i) {
        rows[std::size_t(i)] = order[std::size_t(start + i)];
        std::copy(x.row(rows[std::size_t(i)]), x.row(rows[std::size_t(i)]) + x.cols,
                  chunk.row(i));
      }
      Tensor pred = head_forward_rows(store, "probe", spec, const_rows(chunk));
      Tensor loss = batch_loss(pred, rows);
      store.zero_grad();
      backward_scalar(loss);
      opt.step(store.all());
    }
  }
}

}  // namespace detail

// Two-layer regression probe (hidden width = input width); returns
// predictions on the eval matrix after training to squared error.
inline Mat train_relpose_probe(const Mat& x_train, const Mat& targets,
                               const Mat& x_eval, const ProbeConfig& cfg) {
  if (x_train.rows != targets.rows) {
    throw ConfigError("probe: input/target row mismatch");
  }
  const HeadSpec spec{HeadKind::relpose_probe, x_train.cols, x_train.cols,
                      targets.cols};
  ParamStore store;
  register_head(store, "probe", spec);
  init_params(store, Rng::stream(cfg.seed, "probe_init/" + cfg.tag).next_u64());

  detail::probe_fit(store, spec, x_train, cfg,
                    [&](const Tensor& pred, const std::vector<int>& rows) {
                      Mat t(int(rows.size()), targets.cols);
                      for (std::size_t i = 0; i < rows.size(); ++i) {
                        std::copy(targets.row(rows[i]),
                                  targets.row(rows[i]) + targets.cols,
                                  t.row(int(i)));
                      }
                      return mse_node(pred, t);
                    });
  return detail::predict_rows(store, spec, x_eval, cfg.batch);
}

// Linear softmax probe; returns predicted class per eval row.
inline std::vector<int> train_linear_probe(const Mat& x_train,
                                           const std::vector<int>& labels,
                                           const Mat& x_eval, int n_classes,
                                           const ProbeConfig& cfg) {
  if (int(labels.size()) != x_train.rows) {
    throw ConfigError("probe: input/label length mismatch");
  }
  const HeadSpec spec{HeadKind::linear_probe, x_train.cols, 0, n_classes};
  ParamStore store;
  register_head(store, "probe", spec);
  init_params(store, Rng::stream(cfg.seed, "probe_init/" + cfg.tag).next_u64());

  detail::probe_fit(store, spec, x_train, cfg,
                    [&](const Tensor& pred, const std::vector<int>& rows) {
                      std::vector<int> y(rows.size());
                      for (std::size_t i = 0; i < rows.size(); ++i) {
                        y[i] = labels[std::size_t(rows[i])];
                      }
                      return softmax_ce_node(pred, y);
                    });
  const Mat logits = detail::predict_rows(store, spec, x_eval, cfg.batch);
  std::vector<int> pred(std::size_t(logits.rows));
  for (int r = 0; r < logits.rows; ++r) {
    int best = 0;
    for (int c = 1; c < n_classes; ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    pred[std::size_t(r)] = best;
  }
  return pred;
}

// ---------------------------------------------------------------------------
// Relative pose decoding and accuracy
// ---------------------------------------------------------------------------

// Reconstructs the displacement as a point on the sphere at azimuth
// d_azimuth, elevation d_elevation, folding |elevation| > pi/2 over the
// pole (elevation -> pi - elevation, azimuth += pi). A prediction counts as
// correct when the great-circle angle between the predicted and true
// displacement points is below the tolerance.
inline UnitVec3 relpose_displacement_vec(const RelativePose& rp) {
  double az = rp.d_azimuth;
  double el = rp.d_elevation;
  if (el > kPi / 2) {
    el = kPi - el;
    az = wrap_angle(az + kPi);
  } else if (el < -kPi / 2) {
    el = -kPi - el;
    az = wrap_angle(az + kPi);
  }
  return pose_to_unit_vector(Pose(az, el));
}

// Probe output decoding: (cos, sin, el/(pi/2)) -> angles. The elevation
// channel is clamped to the representable target range [-2, 2].
inline RelativePose decode_relpose(const double* t) {
  const double az = std::atan2(t[1], t[0]);
  const double el = std::clamp(t[2], -2.0, 2.0) * (kPi / 2.0);
  return {az, el};
}

inline double relpose_accuracy(const Mat& predictions,
                               const std::vector<RelativePose>& truth,
                               double tol) {
  if (predictions.rows != int(truth.size()) || predictions.cols != 3) {
    throw ConfigError("relpose_accuracy: shape mismatch");
  }
  if (!(tol > 0.0)) throw ConfigError("relpose_accuracy: tolerance must be > 0");
  int correct = 0;
  for (int r = 0; r < predictions.rows; ++r) {
    const RelativePose pred = decode_relpose(predictions.row(r));
    const UnitVec3 pv = relpose_displacement_vec(pred);
    const UnitVec3 tv = relpose_displacement_vec(truth[std::size_t(r)]);
    if (geodesic_angle(pv, tv) < tol) ++correct;
  }
  return double(correct) / double(predictions.rows);
}

// Relative-pose targets: (cos d_az, sin d_az, d_el / (pi/2)).
inline void encode_relpose_target(const RelativePose& rp, double* out) {
  out[0] = std::cos(rp.d_azimuth);
  out[1] = std::sin(rp.d_azimuth);
  out[2] = rp.d_elevation / (kPi / 2.0);
}

// ---------------------------------------------------------------------------
// Scenario runner
// ---------------------------------------------------------------------------

enum class Scenario {
  in_domain_abs,
  in_domain_rel,
  unseen_pose_rel,
  unseen_semantic_rel,
  semantic_cls,
};

inline const std::vector<std::pair<Scenario, std::string>>& scenario_names() {
  static const std::vector<std::pair<Scenario, std::string>> names = {
      {Scenario::in_domain_abs, "in_domain_abs"},
      {Scenario::in_domain_rel, "in_domain_rel"},
      {Scenario::unseen_pose_rel, "unseen_pose_rel"},
      {Scenario::unseen_semantic_rel, "unseen_semantic_rel"},
      {Scenario::semantic_cls, "semantic_cls"}};
  return names;
}

inline std::string scenario_name(Scenario s) {
  for (const auto& [sc, name] : scenario_names()) {
    if (sc == s) return name;
  }
  throw ConfigError("unknown scenario");
}

inline Scenario scenario_from_name(const std::string& name) {
  for (const auto& [sc, n] : scenario_names()) {
    if (n == name) return sc;
  }
  std::string names;
  for (const auto& [sc, n] : scenario_names()) names += (names.empty() ? "" : ", ") + n;
  throw ConfigError("unknown scenario `" + name + "` (valid: " + names + ")");
}

namespace detail {

// No-leakage guard: instance uid sets on the two sides of a scenario must
// never intersect.
inline void assert_disjoint_instances(const DatasetManifest& manifest,
                                      const RepSet& a, const RepSet& b,
                                      const std::string& what) {
  std::set<int> ua, ub;
  for (const auto& c : a.coords) ua.insert(manifest.instance_uid(c.family_id, c.instance_idx));
  for (const auto& c : b.coords) ub.insert(manifest.instance_uid(c.family_id, c.instance_idx));
  for (int uid : ua) {
    if (ub.count(uid)) {
      throw std::logic_error("leakage: instance sets overlap in " + what);
    }
  }
}

struct PairData {
  Mat x;
  Mat targets;
  std::vector<RelativePose> truth;
};

// Same-instance representation pairs with relative-pose targets. Each half
// of the concatenated input is L2-normalized. Pair index streams are keyed
// by (seed, tag, uid), so pair sets are reproducible per scenario.
inline PairData build_relpose_pairs(const DatasetManifest& manifest,
                                    const RepSet& reps, int pairs_per_instance,
                                    std::uint64_t seed, const std::string& tag) {
  // Row ranges per instance are contiguous by extraction order.
  std::vector<std::pair<int, std::pair<int, int>>> instances;  // uid -> [begin,end)
  int begin = 0;
  for (int r = 1; r <= int(reps.coords.size()); ++r) {
    const bool boundary =
        r == int(reps.coords.size()) ||
        reps.coords[std::size_t(r)].family_id != reps.coords[std::size_t(begin)].family_id ||
        reps.coords[std::size_t(r)].instance_idx != reps.coords[std::size_t(begin)].instance_idx;
    if (boundary) {
      const auto& c = reps.coords[std::size_t(begin)];
      instances.push_back({manifest.instance_uid(c.family_id, c.instance_idx),
                           {begin, r}});
      begin = r;
    }
  }

  const int dim = reps.reps.cols;
  const int total = int(instances.size()) * pairs_per_instance;
  PairData pd;
  pd.x = Mat(total, 2 * dim);
  pd.targets = Mat(total, 3);
  pd.truth.reserve(std::size_t(total));

  int row = 0;
  for (const auto& [uid, range] : instances) {
    const int n = range.second - range.first;
    Rng rng = Rng::stream(seed, "pairs/" + tag, std::uint64_t(uid));
    for (int p = 0; p < pairs_per_instance; ++p) {
      const int i = range.first + rng.index(n);
      int j = range.first + rng.index(n - 1);
      if (j >= i) ++j;  // distinct poses

      double* xr = pd.x.row(row);
      auto copy_normalized = [&](int src, double* dst) {
        const double* s = reps.reps.row(src);
        double nrm = 0.0;
        for (int c = 0; c < dim; ++c) nrm += s[c] * s[c];
        nrm = std::max(std::sqrt(nrm), 1e-12);
        for (int c = 0; c < dim; ++c) dst[c] = s[c] / nrm;
      };
      copy_normalized(i, xr);
      copy_normalized(j, xr + dim);

      const RelativePose rp =
          relative_pose(reps.poses[std::size_t(i)], reps.poses[std::size_t(j)]);
      encode_relpose_target(rp, pd.targets.row(row));
      pd.truth.push_back(rp);
      ++row;
    }
  }
  return pd;
}

}  // namespace detail

// Memoizes representation extraction across scenarios and layers; results
// are identical to calling extract_representations directly.
class RepCache {
 public:
  RepCache(const Model& model, const DatasetManifest& manifest,
           SampleSource& source)
      : model_(&model), manifest_(&manifest), source_(&source) {}

  const Model& model() const { return *model_; }
  const DatasetManifest& manifest() const { return *manifest_; }

  const RepSet& get(bool in_domain_families, bool train_split,
                    bool in_domain_poses, const std::string& layer) {
    const std::string key = layer + "/" + (in_domain_families ? "id" : "ood") +
                            (train_split ? "/train" : "/test") +
                            (in_domain_poses ? "/idpose" : "/oodpose");
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_
               .emplace(key, extract_representations(
                                 *model_, *manifest_, *source_,
                                 manifest_->family_ids(in_domain_families),
                                 train_split, in_domain_poses, layer))
               .first;
    }
    return it->second;
  }

 private:
  const Model* model_;
  const DatasetManifest* manifest_;
  SampleSource* source_;
  std::map<std::string, RepSet> cache_;
};

// Runs one evaluation scenario on a frozen model at the given layer.
// Gallery / probe-training data always come from the train-split instances
// and evaluation from the test split, so no instance crosses sides.
inline MetricsRecord run_scenario(Scenario scenario, RepCache& reps_cache,
                                  const EvalSection& eval,
                                  const std::string& layer, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const DatasetManifest& manifest = reps_cache.manifest();
  MetricsRecord rec;
  rec.scenario = scenario_name(scenario);
  rec.layer = layer;
  rec.seed = seed;

  const bool ood_families = scenario == Scenario::unseen_semantic_rel;
  const bool ood_poses = scenario == Scenario::unseen_pose_rel;
  if (manifest.family_ids(!ood_families).empty()) {
    throw ConfigError("scenario: no families in the requested domain");
  }

  const RepSet& train_reps = reps_cache.get(!ood_families, true, !ood_poses, layer);
  const RepSet& eval_reps = reps_cache.get(!ood_families, false, !ood_poses, layer);
  detail::assert_disjoint_instances(manifest, train_reps, eval_reps,
                                    rec.scenario);

  switch (scenario) {
    case Scenario::in_domain_abs: {
      std::vector<int> gallery_labels, query_labels;
      for (const auto& c : train_reps.coords) gallery_labels.push_back(c.pose_idx);
      for (const auto& c : eval_reps.coords) query_labels.push_back(c.pose_idx);
      const int n_classes = int(manifest.poses_in_domain.size());
      const std::vector<int> pred =
          knn_predict(train_reps.reps, gallery_labels, eval_reps.reps, eval.knn_k,
                      eval.knn_temperature, n_classes);
      int correct = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == query_labels[i]) ++correct;
      }
      rec.accuracy = double(correct) / double(pred.size());
      rec.n_eval = int(pred.size());
      break;
    }
    case Scenario::semantic_cls: {
      // Family ids mapped to dense class indices.
      std::map<int, int> cls;
      for (int f : fams) cls.emplace(f, int(cls.size()));
      std::vector<int> labels;
      for (const auto& c : train_reps.coords) labels.push_back(cls.at(c.family_id));
      Mat xtr = train_reps.reps;
      Mat xev = eval_reps.reps;
      l2_normalize_rows(xtr);
      l2_normalize_rows(xev);
      ProbeConfig pc{eval.probe_epochs, eval.probe_batch, eval.probe_lr,
                     eval.probe_momentum, seed, rec.scenario + "/" + layer};
      const std::vector<int> pred =
          train_linear_probe(xtr, labels, xev, int(cls.size()), pc);
      int correct = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == cls.at(eval_reps.coords[i].family_id)) ++correct;
      }
      rec.accuracy = double(correct) / double(pred.size());
      rec.n_eval = int(pred.size());
      break;
    }
    default: {  // relative-pose probes
      const std::string tag = rec.scenario + "/" + layer;
      const detail::PairData train_pairs = detail::build_relpose_pairs(
          manifest, train_reps, eval.pairs_per_instance, seed, tag + "/train");
      const detail::PairData eval_pairs = detail::build_relpose_pairs(
          manifest, eval_reps, eval.pairs_per_instance, seed, tag + "/eval");
      ProbeConfig pc{eval.probe_epochs, eval.probe_batch, eval.probe_lr,
                     eval.probe_momentum, seed, tag};
      const Mat pred =
          train_relpose_probe(train_pairs.x, train_pairs.targets, eval_pairs.x, pc);
      rec.accuracy = relpose_accuracy(pred, eval_pairs.truth, eval.relpose_tol);
      rec.n_eval = int(eval_pairs.truth.size());
      break;
    }
  }

  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// ---------------------------------------------------------------------------
// Embedding dumps
// ---------------------------------------------------------------------------

// Flat little-endian float32 matrix plus a JSON sidecar carrying the shape
// and the (family, instance, pose) coordinate of every row.
inline void write_embedding_dump(const std::string& path_prefix,
                                 const RepSet& set) {
  {
    std::ofstream out(path_prefix + ".f32", std::ios::binary);
    if (!out) throw IoError("cannot open " + path_prefix + ".f32");
    std::vector<float> row(std::size_t(set.reps.cols));
    for (int r = 0; r < set.reps.rows; ++r) {
      for (int c = 0; c < set.reps.cols; ++c) row[std::size_t(c)] = float(set.reps.at(r, c));
      out.write(reinterpret_cast<const char*>(row.data()),
                std::streamsize(row.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed for " + path_prefix + ".f32");
  }
  ordered_json j;
  j["rows"] = set.reps.rows;
  j["cols"] = set.reps.cols;
  j["dtype"] = "float32-le";
  j["coords"] = ordered_json::array();
  for (const auto& c : set.coords) {
    j["coords"].push_back({c.family_id, c.instance_idx, c.pose_idx});
  }
  std::ofstream out(path_prefix + ".json", std::ios::binary);
  if (!out) throw IoError("cannot open " + path_prefix + ".json");
  out << j.dump() << "\n";
  if (!out) throw IoError("write failed for " + path_prefix + ".json");
}

}  // namespace trajssl

#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"
#include "trajssl/dataset.hpp"
#include "trajssl/errors.hpp"
#include "trajssl/geometry.hpp"
#include "trajssl/nn.hpp"
#include "trajssl/optim.hpp"

namespace trajssl {

struct TrainSection {
  std::string semantic_loss = "ntxent";  // ntxent | vicreg
  double lambda = 0.01;
  std::string traj_layer = "feature";  // feature | conv3 | conv4 (conv taps
                                       // route through compression heads)
  int epochs = 40;
  int batch_size = 64;
  int triplets_per_instance = 2;  // triplet draws per train instance per epoch
  std::string optimizer = "sgd";  // sgd | lars
  double lr = 0.05;
  double weight_decay = 0.0;
  double momentum = 0.9;
  double temperature = 0.5;
  double vicreg_sim = 25.0;
  double vicreg_var = 25.0;
  double vicreg_cov = 1.0;
  double traj_eps = 1e-8;

  OptimizerConfig optimizer_config() const {
    return {optimizer == "lars" ? OptKind::lars : OptKind::sgd_momentum, lr,
            weight_decay, momentum};
  }
};

struct EvalSection {
  int knn_k = 20;
  double knn_temperature = 0.07;
  int pairs_per_instance = 10;
  int probe_epochs = 20;
  int probe_batch = 128;
  double probe_lr = 0.05;
  double probe_momentum = 0.9;
  // Angular correctness threshold for relative pose: half the Fib(50)
  // minimum lattice spacing.
  double relpose_tol = kFib50MinPairwiseAngle / 2.0;
};

// Top-level run configuration. Every field has a documented default except
// the mandatory global seed; the dataset section carries its own seed that
// defaults to the global one, so a training run's echo pins the manifest it
// consumed. Unknown keys are rejected with the offending path.
struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainSection train;
  EvalSection eval;
  std::uint64_t seed = 0;

  std::string label() const { return train.lambda == 0.0 ? "baseline" : "traj"; }
};

namespace detail {

template <typename T>
T get_num(const ordered_json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError("config: `" + path + "` must be numeric");
  return v.get<T>();
}

inline void parse_model(ModelConfig& m, const ordered_json& j, bool& size_set) {
  for (const auto& [key, value] : j.items()) {
    if (key == "image_size") {
      m.image_size = get_num<int>(value, "model.image_size");
      size_set = true;
    }
    else if (key == "widths") {
      auto w = value.get<std::vector<int>>();
      if (w.size() != 4) throw ConfigError("config: `model.widths` needs 4 entries");
      for (int i = 0; i < 4; ++i) m.widths[std::size_t(i)] = w[std::size_t(i)];
    }
    else if (key == "feature_dim") m.feature_dim = get_num<int>(value, "model.feature_dim");
    else if (key == "projector_hidden") m.projector_hidden = get_num<int>(value, "model.projector_hidden");
    else if (key == "projector_out") m.projector_out = get_num<int>(value, "model.projector_out");
    else if (key == "compression_hidden") m.compression_hidden = get_num<int>(value, "model.compression_hidden");
    else throw ConfigError("config: unknown key `model." + key + "`");
  }
}

inline void parse_train(TrainSection& t, const ordered_json& j,
                        bool& lr_set, bool& wd_set) {
  for (const auto& [key, value] : j.items()) {
    if (key == "semantic_loss") t.semantic_loss = value.get<std::string>();
    else if (key == "lambda") t.lambda = get_num<double>(value, "train.lambda");
    else if (key == "traj_layer") t.traj_layer = value.get<std::string>();
    else if (key == "epochs") t.epochs = get_num<int>(value, "train.epochs");
    else if (key == "batch_size") t.batch_size = get_num<int>(value, "train.batch_size");
    else if (key == "triplets_per_instance") t.triplets_per_instance = get_num<int>(value, "train.triplets_per_instance");
    else if (key == "optimizer") t.optimizer = value.get<std::string>();
    else if (key == "lr") { t.lr = get_num<double>(value, "train.lr"); lr_set = true; }
    else if (key == "weight_decay") { t.weight_decay = get_num<double>(value, "train.weight_decay"); wd_set = true; }
    else if (key == "momentum") t.momentum = get_num<double>(value, "train.momentum");
    else if (key == "temperature") t.temperature = get_num<double>(value, "train.temperature");
    else if (key == "vicreg_sim") t.vicreg_sim = get_num<double>(value, "train.vicreg_sim");
    else if (key == "vicreg_var") t.vicreg_var = get_num<double>(value, "train.vicreg_var");
    else if (key == "vicreg_cov") t.vicreg_cov = get_num<double>(value, "train.vicreg_cov");
    else if (key == "traj_eps") t.traj_eps = get_num<double>(value, "train.traj_eps");
    else throw ConfigError("config: unknown key `train." + key + "`");
  }
}

inline void parse_eval(EvalSection& e, const ordered_json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "knn_k") e.knn_k = get_num<int>(value, "eval.knn_k");
    else if (key == "knn_temperature") e.knn_temperature = get_num<double>(value, "eval.knn_temperature");
    else if (key == "pairs_per_instance") e.pairs_per_instance = get_num<int>(value, "eval.pairs_per_instance");
    else if (key == "probe_epochs") e.probe_epochs = get_num<int>(value, "eval.probe_epochs");
    else if (key == "probe_batch") e.probe_batch = get_num<int>(value, "eval.probe_batch");
    else if (key == "probe_lr") e.probe_lr = get_num<double>(value, "eval.probe_lr");
    else if (key == "probe_momentum") e.probe_momentum = get_num<double>(value, "eval.probe_momentum");
    else if (key == "relpose_tol") e.relpose_tol = get_num<double>(value, "eval.relpose_tol");
    else throw ConfigError("config: unknown key `eval." + key + "`");
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const ordered_json& j) {
  RunConfig c;
  bool seed_set = false, dataset_seed_set = false, model_size_set = false;
  bool lr_set = false, wd_set = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      c.seed = detail::get_num<std::uint64_t>(value, "seed");
      seed_set = true;
    } else if (key == "dataset") {
      // Strict key walk shared with the manifest loader; track whether the
      // dataset seed was given explicitly.
      dataset_seed_set = value.contains("seed");
      c.dataset = dataset_config_from_json(value);
    } else if (key == "model") {
      detail::parse_model(c.model, value, model_size_set);
    } else if (key == "train") {
      detail::parse_train(c.train, value, lr_set, wd_set);
    } else if (key == "eval") {
      detail::parse_eval(c.eval, value);
    } else {
      throw ConfigError("config: unknown key `" + key + "`");
    }
  }
  if (!seed_set) throw ConfigError("config: `seed` is mandatory");
  if (!dataset_seed_set) c.dataset.seed = c.seed;
  if (!model_size_set) c.model.image_size = c.dataset.image_size;

  if (c.train.semantic_loss != "ntxent" && c.train.semantic_loss != "vicreg") {
    throw ConfigError("config: train.semantic_loss must be ntxent or vicreg");
  }
  if (c.train.traj_layer != "feature" && c.train.traj_layer != "conv3" &&
      c.train.traj_layer != "conv4") {
    throw ConfigError("config: train.traj_layer must be feature, conv3 or conv4");
  }
  if (c.train.optimizer != "sgd" && c.train.optimizer != "lars") {
    throw ConfigError("config: train.optimizer must be sgd or lars");
  }
  if (c.train.lambda < 0.0) throw ConfigError("config: train.lambda must be >= 0");
  if (c.train.epochs < 0 || c.train.batch_size < 2) {
    throw ConfigError("config: need train.epochs >= 0 and train.batch_size >= 2");
  }
  if (c.model.image_size != c.dataset.image_size) {
    throw ConfigError("config: model.image_size must equal dataset.image_size");
  }
  // The paper-mirroring LARS configuration: lr 0.3, weight decay 1e-4,
  // unless the config pins its own values.
  if (c.train.optimizer == "lars") {
    if (!lr_set) c.train.lr = 0.3;
    if (!wd_set) c.train.weight_decay = 1e-4;
  }
  return c;
}

inline ordered_json run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["label"] = c.label();
  j["dataset"] = dataset_config_to_json(c.dataset);
  j["model"] = ordered_json{{"image_size", c.model.image_size},
                            {"widths", c.model.widths},
                            {"feature_dim", c.model.feature_dim},
                            {"projector_hidden", c.model.projector_hidden},
                            {"projector_out", c.model.projector_out},
                            {"compression_hidden", c.model.compression_hidden}};
  j["train"] = ordered_json{{"semantic_loss", c.train.semantic_loss},
                            {"lambda", c.train.lambda},
                            {"traj_layer", c.train.traj_layer},
                            {"epochs", c.train.epochs},
                            {"batch_size", c.train.batch_size},
                            {"triplets_per_instance", c.train.triplets_per_instance},
                            {"optimizer", c.train.optimizer},
                            {"lr", c.train.lr},
                            {"weight_decay", c.train.weight_decay},
                            {"momentum", c.train.momentum},
                            {"temperature", c.train.temperature},
                            {"vicreg_sim", c.train.vicreg_sim},
                            {"vicreg_var", c.train.vicreg_var},
                            {"vicreg_cov", c.train.vicreg_cov},
                            {"traj_eps", c.train.traj_eps}};
  j["eval"] = ordered_json{{"knn_k", c.eval.knn_k},
                           {"knn_temperature", c.eval.knn_temperature},
                           {"pairs_per_instance", c.eval.pairs_per_instance},
                           {"probe_epochs", c.eval.probe_epochs},
                           {"probe_batch", c.eval.probe_batch},
                           {"probe_lr", c.eval.probe_lr},
                           {"probe_momentum", c.eval.probe_momentum},
                           {"relpose_tol", c.eval.relpose_tol}};
  return j;
}

// Round-trip entry point for the resolved-config echo written into every
// output directory: parsing the echo reproduces the run.
inline RunConfig parse_run_config_echo(const ordered_json& j) {
  ordered_json stripped = j;
  stripped.erase("label");  // derived field, re-derived on parse
  return parse_run_config(stripped);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  if (j.contains("label")) return parse_run_config_echo(j);
  return parse_run_config(j);
}

inline std::string run_config_echo_string(const RunConfig& c) {
  return run_config_to_json(c).dump(2) + "\n";
}

}  // namespace trajssl

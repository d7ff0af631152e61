#pragma once

#include <charconv>
#include <json.hpp>
#include <string>
#include <system_error>
#include <vector>

#include "ddp/dataset.hpp"
#include "ddp/denoiser.hpp"
#include "ddp/environment.hpp"
#include "ddp/errors.hpp"
#include "ddp/geometry.hpp"
#include "ddp/io.hpp"
#include "ddp/planner.hpp"
#include "ddp/sampler.hpp"
#include "ddp/trainer.hpp"

namespace ddp {

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_float(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Parses the run config file. Unknown top-level keys are rejected; each
/// section does its own strict key check.
inline nlohmann::json load_config_file(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  const std::string text = read_file_text(path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  if (!root.is_object()) throw ConfigError(path + ": config root must be an object");
  detail::check_keys(
      root, {"world", "world_file", "dataset", "model", "train", "sample", "sweep", "plan",
             "seed"},
      "config");
  return root;
}

/// Pose literal: [x, y, z] or [x, y, z, rx, ry, rz] with a rotation vector.
inline Pose pose_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || (j.size() != 3 && j.size() != 6))
    throw ConfigError(where + ": expected an array of 3 or 6 numbers");
  for (const auto& v : j)
    if (!v.is_number()) throw ConfigError(where + ": expected numbers");
  Pose p;
  for (int i = 0; i < 3; ++i) p.position[i] = j[static_cast<std::size_t>(i)].get<double>();
  if (j.size() == 6) {
    Eigen::Vector3d r;
    for (int i = 0; i < 3; ++i) r[i] = j[static_cast<std::size_t>(i + 3)].get<double>();
    p.orientation = exp_map(r);
  }
  return p;
}

inline nlohmann::json pose_to_json(const Pose& p, CoordMode mode) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) j.push_back(p.position[i]);
  if (mode == CoordMode::kFullPose) {
    const Eigen::Vector3d r = log_map(p.orientation);
    for (int i = 0; i < 3; ++i) j.push_back(r[i]);
  }
  return j;
}

/// World from the config: inline object, a referenced file, or an explicit
/// file override (--world flag).
inline World world_from_config(const nlohmann::json& root, const std::string& override_path) {
  std::string file = override_path;
  if (file.empty() && root.contains("world_file"))
    file = root.at("world_file").get<std::string>();
  if (!file.empty()) {
    const std::string text = read_file_text(file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(file + ": invalid world JSON: " + e.what());
    }
    return world_from_json(j);
  }
  if (root.contains("world")) return world_from_json(root.at("world"));
  throw ConfigError("config: needs a 'world' object, 'world_file', or --world");
}

struct DatasetSection {
  int count = 60000;
  int waypoints = 32;
  CoordMode mode = CoordMode::kPosition;
  RewardParams reward;
};

inline DatasetSection dataset_section(const nlohmann::json& root) {
  DatasetSection s;
  if (!root.contains("dataset")) return s;
  const auto& j = root.at("dataset");
  detail::check_keys(j, {"count", "waypoints", "mode", "reward"}, "config.dataset");
  if (j.contains("count")) s.count = j.at("count").get<int>();
  if (j.contains("waypoints")) s.waypoints = j.at("waypoints").get<int>();
  if (j.contains("mode")) {
    const std::string m = j.at("mode").get<std::string>();
    if (m == "position") {
      s.mode = CoordMode::kPosition;
    } else if (m == "full-pose") {
      s.mode = CoordMode::kFullPose;
    } else {
      throw ConfigError("config.dataset.mode: expected position or full-pose");
    }
  }
  if (j.contains("reward")) s.reward = reward_from_json(j.at("reward"), "config.dataset.reward");
  if (s.count < 1) throw ConfigError("config.dataset.count must be >= 1");
  if (s.waypoints < 2) throw ConfigError("config.dataset.waypoints must be >= 2");
  return s;
}

struct ModelSection {
  DenoiserConfig cfg;  // dims/horizon are filled from the dataset at train time
  int K = 200;
  double s = 0.008;
};

inline ModelSection model_section(const nlohmann::json& root) {
  ModelSection s;
  if (!root.contains("model")) return s;
  const auto& j = root.at("model");
  detail::check_keys(
      j, {"arch", "widths", "step_embed", "cond_embed", "kernel", "groups", "schedule"},
      "config.model");
  if (j.contains("arch")) s.cfg.arch = arch_from_name(j.at("arch").get<std::string>());
  if (j.contains("widths")) s.cfg.widths = j.at("widths").get<std::vector<int>>();
  if (j.contains("step_embed")) s.cfg.step_embed = j.at("step_embed").get<int>();
  if (j.contains("cond_embed")) s.cfg.cond_embed = j.at("cond_embed").get<int>();
  if (j.contains("kernel")) s.cfg.kernel = j.at("kernel").get<int>();
  if (j.contains("groups")) s.cfg.groups = j.at("groups").get<int>();
  if (j.contains("schedule")) {
    const auto& js = j.at("schedule");
    detail::check_keys(js, {"K", "s"}, "config.model.schedule");
    if (js.contains("K")) s.K = js.at("K").get<int>();
    if (js.contains("s")) s.s = js.at("s").get<double>();
  }
  if (s.K < 1) throw ConfigError("config.model.schedule.K must be >= 1");
  return s;
}

inline TrainConfig train_section(const nlohmann::json& root) {
  TrainConfig t;
  if (!root.contains("train")) return t;
  const auto& j = root.at("train");
  detail::check_keys(j,
                     {"steps", "batch", "lr", "beta1", "beta2", "adam_eps", "drop_prob",
                      "log_interval", "checkpoint_interval", "ema"},
                     "config.train");
  if (j.contains("steps")) t.steps = j.at("steps").get<int>();
  if (j.contains("batch")) t.batch = j.at("batch").get<int>();
  if (j.contains("lr")) t.lr = j.at("lr").get<double>();
  if (j.contains("beta1")) t.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) t.beta2 = j.at("beta2").get<double>();
  if (j.contains("adam_eps")) t.adam_eps = j.at("adam_eps").get<double>();
  if (j.contains("drop_prob")) t.drop_prob = j.at("drop_prob").get<double>();
  if (j.contains("log_interval")) t.log_interval = j.at("log_interval").get<int>();
  if (j.contains("checkpoint_interval"))
    t.checkpoint_interval = j.at("checkpoint_interval").get<int>();
  if (j.contains("ema")) {
    const auto& je = j.at("ema");
    detail::check_keys(je, {"enabled", "decay"}, "config.train.ema");
    if (je.contains("enabled")) t.ema = je.at("enabled").get<bool>();
    if (je.contains("decay")) t.ema_decay = je.at("decay").get<double>();
  }
  t.validate();
  return t;
}

inline GuidanceSpec sample_section(const nlohmann::json& root) {
  GuidanceSpec g;
  if (root.contains("sample")) {
    const auto& j = root.at("sample");
    detail::check_keys(j,
                       {"strategy", "w", "target_return", "lambda", "w_ee", "w_c", "step_clip",
                        "c_clip", "clip_x0"},
                       "config.sample");
    if (j.contains("strategy")) g.strategy = strategy_from_name(j.at("strategy").get<std::string>());
    if (j.contains("w")) g.w = j.at("w").get<double>();
    if (j.contains("target_return")) g.target_return = j.at("target_return").get<double>();
    if (j.contains("lambda")) g.lambda = j.at("lambda").get<double>();
    if (j.contains("w_ee")) g.w_ee = j.at("w_ee").get<double>();
    if (j.contains("w_c")) g.w_c = j.at("w_c").get<double>();
    if (j.contains("step_clip")) g.step_clip = j.at("step_clip").get<double>();
    if (j.contains("c_clip")) g.c_clip = j.at("c_clip").get<double>();
    if (j.contains("clip_x0")) g.clip_x0 = j.at("clip_x0").get<bool>();
  }
  g.apply_strategy_rules();
  g.validate();
  return g;
}

struct SweepSection {
  Pose start, goal;
  std::vector<int> horizons = {32, 64, 128, 256};
  std::vector<double> returns = {-0.1, -0.01, -0.001};
  std::vector<int> repeats = {1};
  int paths_per_cell = 30;
};

inline SweepSection sweep_section(const nlohmann::json& root) {
  if (!root.contains("sweep")) throw ConfigError("config: missing 'sweep' section");
  const auto& j = root.at("sweep");
  detail::check_keys(j, {"start", "goal", "horizons", "returns", "repeats", "paths_per_cell"},
                     "config.sweep");
  SweepSection s;
  if (!j.contains("start") || !j.contains("goal"))
    throw ConfigError("config.sweep: needs 'start' and 'goal'");
  s.start = pose_from_json(j.at("start"), "config.sweep.start");
  s.goal = pose_from_json(j.at("goal"), "config.sweep.goal");
  if (j.contains("horizons")) s.horizons = j.at("horizons").get<std::vector<int>>();
  if (j.contains("returns")) s.returns = j.at("returns").get<std::vector<double>>();
  if (j.contains("repeats")) s.repeats = j.at("repeats").get<std::vector<int>>();
  if (j.contains("paths_per_cell")) s.paths_per_cell = j.at("paths_per_cell").get<int>();
  if (s.horizons.empty() || s.returns.empty() || s.repeats.empty())
    throw ConfigError("config.sweep: horizons, returns, repeats must be nonempty");
  if (s.paths_per_cell < 1) throw ConfigError("config.sweep.paths_per_cell must be >= 1");
  return s;
}

struct PlanSection {
  Pose start, goal;
  PlanConfig plan;  // guidance is filled from the sample section by the caller
};

inline PlanSection plan_section(const nlohmann::json& root) {
  if (!root.contains("plan")) throw ConfigError("config: missing 'plan' section");
  const auto& j = root.at("plan");
  detail::check_keys(j,
                     {"start", "goal", "horizon", "track", "batch", "repeat_goal", "delta",
                      "orientation_tolerance", "max_replans", "sigma_track", "warm_start"},
                     "config.plan");
  PlanSection s;
  if (!j.contains("start") || !j.contains("goal"))
    throw ConfigError("config.plan: needs 'start' and 'goal'");
  s.start = pose_from_json(j.at("start"), "config.plan.start");
  s.goal = pose_from_json(j.at("goal"), "config.plan.goal");
  if (j.contains("horizon")) s.plan.horizon = j.at("horizon").get<int>();
  if (j.contains("track")) s.plan.track = j.at("track").get<int>();
  if (j.contains("batch")) s.plan.batch = j.at("batch").get<int>();
  if (j.contains("repeat_goal")) s.plan.repeat_goal = j.at("repeat_goal").get<int>();
  if (j.contains("delta")) s.plan.delta = j.at("delta").get<double>();
  if (j.contains("orientation_tolerance"))
    s.plan.orientation_tolerance = j.at("orientation_tolerance").get<double>();
  if (j.contains("max_replans")) s.plan.max_replans = j.at("max_replans").get<int>();
  if (j.contains("sigma_track")) s.plan.sigma_track = j.at("sigma_track").get<double>();
  if (j.contains("warm_start")) s.plan.warm_start = j.at("warm_start").get<bool>();
  return s;
}

/// The cfg strategies assume the model was conditioned on the matching
/// reward; running them against the wrong checkpoint is a configuration
/// mistake, not a quiet degradation.
inline void check_strategy_compatibility(const GuidanceSpec& g, const Model& m) {
  if (g.strategy == Strategy::kCfgDense || g.strategy == Strategy::kCfgDenseCost) {
    if (m.reward.kind != RewardKind::kDense)
      throw ConfigError("strategy " + strategy_name(g.strategy) +
                        " needs a dense-reward checkpoint");
  }
  if (g.strategy == Strategy::kCfgSparse || g.strategy == Strategy::kCfgSparseCost) {
    if (m.reward.kind != RewardKind::kSparse)
      throw ConfigError("strategy " + strategy_name(g.strategy) +
                        " needs a sparse-reward checkpoint");
  }
}

}  // namespace ddp

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "ddp/checkpoint.hpp"
#include "ddp/environment.hpp"
#include "ddp/errors.hpp"
#include "ddp/geometry.hpp"
#include "ddp/rng.hpp"
#include "ddp/sampler.hpp"

namespace ddp {

struct PlanConfig {
  int horizon = 128;      // waypoints per sampled path
  int track = 64;         // waypoints executed per replan (m)
  int batch = 5;          // paths sampled per replan (n)
  int repeat_goal = 5;    // inpainted goal rows (i)
  double delta = 0.05;    // position tolerance for reaching the goal
  double orientation_tolerance = 0.2;  // radians, full-pose mode only
  int max_replans = 20;
  double sigma_track = 0.0;  // per-axis noise injected on executed positions
  // Warm start: replans after the first initialize the reverse chain from the
  // unexecuted tail of the previous plan, re-noised to the middle of the
  // schedule, instead of from pure noise at K.
  bool warm_start = false;
  GuidanceSpec guidance;

  void validate() const {
    if (horizon < 2) throw ConfigError("plan: horizon must be >= 2");
    if (repeat_goal < 1) throw ConfigError("plan: repeat_goal must be >= 1");
    if (track < 1 || track > horizon - repeat_goal)
      throw ConfigError("plan: track must satisfy 1 <= track <= horizon - repeat_goal");
    if (batch < 1) throw ConfigError("plan: batch must be >= 1");
    if (!(delta > 0.0)) throw ConfigError("plan: delta must be positive");
    if (!(orientation_tolerance > 0.0))
      throw ConfigError("plan: orientation_tolerance must be positive");
    if (max_replans < 1) throw ConfigError("plan: max_replans must be >= 1");
    if (!(sigma_track >= 0.0)) throw ConfigError("plan: sigma_track must be >= 0");
    guidance.validate();
  }
};

struct ExecutedStep {
  Pose pose;
  double distance_to_goal = 0.0;
  bool in_collision = false;
};

struct ExecutionTrace {
  std::vector<ExecutedStep> steps;  // steps[0] is the start pose
  std::vector<int> selected;        // chosen path index per replan
  int replans = 0;
  bool reached = false;
  double final_gap = 0.0;
  double final_rot_gap = 0.0;
  int collisions = 0;
};

inline double rotation_gap(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  return log_map(a.conjugate() * b).norm();
}

/// Receding-horizon execution: sample a batch inpainted from the current
/// pose, track the selected path through waypoint `track - 1` (waypoint 0 is
/// the current pose itself), re-anchor exactly on the reached pose, and
/// repeat until the goal tolerance is met or the replan budget runs out.
/// Replan r uses sampling sub-stream (seed, r); tracking noise has its own
/// stream, so sigma_track = 0 leaves the sampling streams untouched.
inline ExecutionTrace plan_path(const Model& model, const World& world, const Pose& start,
                                const Pose& goal, const PlanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (world.in_collision(start.position))
    throw InfeasibleError("plan: start position is inside an obstacle");
  if (world.in_collision(goal.position))
    throw InfeasibleError("plan: goal position is inside an obstacle");

  const bool full_pose = model.mode() == CoordMode::kFullPose;
  auto reached = [&](const Pose& p) {
    if ((p.position - goal.position).norm() > cfg.delta) return false;
    if (full_pose && rotation_gap(p.orientation, goal.orientation) > cfg.orientation_tolerance)
      return false;
    return true;
  };

  ExecutionTrace trace;
  Pose current = start;
  trace.steps.push_back({current, (current.position - goal.position).norm(),
                         world.in_collision(current.position)});
  if (trace.steps.front().in_collision) ++trace.collisions;
  trace.reached = reached(current);

  Rng track_rng = Rng::derived(seed, 0x74726B);  // tracking-noise stream
  Eigen::MatrixXd warm_tail;
  for (int r = 0; r < cfg.max_replans && !trace.reached; ++r) {
    InpaintSpec inpaint{current, goal, cfg.repeat_goal};
    const bool warm = cfg.warm_start && warm_tail.size() > 0;
    const SampleBatch batch = sample_paths(model, world, cfg.batch, cfg.horizon, cfg.guidance,
                                           &inpaint, mix_seed(seed, static_cast<std::uint64_t>(r)),
                                           warm ? &warm_tail : nullptr,
                                           std::max(1, model.sched.K / 2));
    trace.selected.push_back(batch.selected);
    ++trace.replans;
    if (cfg.warm_start) {
      // Shift the selected plan by the tracked prefix; the goal rows pad the
      // end so the tail keeps the full horizon length.
      const Eigen::MatrixXd norm = model.norm.normalize(batch.best().coords);
      warm_tail.resize(norm.rows(), norm.cols());
      for (Eigen::Index t = 0; t < norm.rows(); ++t)
        warm_tail.row(t) = norm.row(std::min(t + cfg.track, norm.rows() - 1));
    }
    const Trajectory& best = batch.best().traj;
    for (int t = 1; t < cfg.track; ++t) {
      Pose p = best.poses[static_cast<std::size_t>(t)];
      if (cfg.sigma_track > 0.0) {
        for (int d = 0; d < 3; ++d) p.position[d] += cfg.sigma_track * track_rng.normal();
      }
      const bool hit = world.in_collision(p.position);
      if (hit) ++trace.collisions;
      trace.steps.push_back({p, (p.position - goal.position).norm(), hit});
      current = p;
      if (reached(current)) {
        trace.reached = true;
        break;
      }
    }
  }
  trace.final_gap = (current.position - goal.position).norm();
  trace.final_rot_gap = full_pose ? rotation_gap(current.orientation, goal.orientation) : 0.0;
  return trace;
}

}  // namespace ddp

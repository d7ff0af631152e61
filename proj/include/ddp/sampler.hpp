#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ddp/checkpoint.hpp"
#include "ddp/dataset.hpp"
#include "ddp/denoiser.hpp"
#include "ddp/environment.hpp"
#include "ddp/errors.hpp"
#include "ddp/geometry.hpp"
#include "ddp/rng.hpp"

namespace ddp {

/// The five sampling strategies. The cfg variants steer with a return
/// condition (dense or sparse reward semantics); cost variants add an
/// analytic cost gradient; cost-only never evaluates the condition encoder.
enum class Strategy {
  kCfgDense,
  kCfgSparse,
  kCostOnly,
  kCfgDenseCost,
  kCfgSparseCost,
};

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kCfgDense: return "cfg-dense";
    case Strategy::kCfgSparse: return "cfg-sparse";
    case Strategy::kCostOnly: return "cost-only";
    case Strategy::kCfgDenseCost: return "cfg-dense+cost";
    case Strategy::kCfgSparseCost: return "cfg-sparse+cost";
  }
  return "cfg-dense";
}

inline Strategy strategy_from_name(const std::string& s) {
  if (s == "cfg-dense") return Strategy::kCfgDense;
  if (s == "cfg-sparse") return Strategy::kCfgSparse;
  if (s == "cost-only") return Strategy::kCostOnly;
  if (s == "cfg-dense+cost") return Strategy::kCfgDenseCost;
  if (s == "cfg-sparse+cost") return Strategy::kCfgSparseCost;
  throw ConfigError("unknown strategy '" + s +
                    "' (expected cfg-dense, cfg-sparse, cost-only, cfg-dense+cost, "
                    "cfg-sparse+cost)");
}

struct GuidanceSpec {
  Strategy strategy = Strategy::kCfgDense;
  double w = 1.2;                // classifier-free guidance weight
  double target_return = -0.01;  // raw return the condition asks for
  double lambda = 1.0;           // cost-guidance step scale
  double w_ee = 1e-3;            // goal-attraction cost weight
  double w_c = 1e-3;             // collision cost weight
  double step_clip = 1.0;        // elementwise cap on the cost shift, normalized units
  double c_clip = 3.0;           // clean-signal clamp
  bool clip_x0 = true;

  bool uses_cfg() const { return strategy != Strategy::kCostOnly; }
  bool uses_cost() const {
    return strategy == Strategy::kCostOnly || strategy == Strategy::kCfgDenseCost ||
           strategy == Strategy::kCfgSparseCost;
  }

  /// Combined cfg+cost strategies keep only the goal-attraction term; the
  /// collision term is handled by the conditioned model.
  void apply_strategy_rules() {
    if (strategy == Strategy::kCfgDenseCost || strategy == Strategy::kCfgSparseCost) w_c = 0.0;
  }

  void validate() const {
    if (!(w >= 0.0)) throw ConfigError("guidance: w must be >= 0");
    if (!(lambda >= 0.0)) throw ConfigError("guidance: lambda must be >= 0");
    if (!(w_ee >= 0.0) || !(w_c >= 0.0))
      throw ConfigError("guidance: cost weights must be >= 0");
    if (!(step_clip > 0.0)) throw ConfigError("guidance: step_clip must be positive");
    if (!(c_clip > 0.0)) throw ConfigError("guidance: c_clip must be positive");
    if (uses_cost() && w_ee == 0.0 && w_c == 0.0)
      throw ConfigError("guidance: a cost strategy needs at least one nonzero cost weight");
  }
};

/// Endpoint constraints: waypoint 0 is the start, the last repeat_goal
/// waypoints are the goal.
struct InpaintSpec {
  Pose start;
  Pose goal;
  int repeat_goal = 1;

  void validate(int horizon) const {
    if (repeat_goal < 1) throw ConfigError("inpaint: repeat_goal must be >= 1");
    if (repeat_goal >= horizon - repeat_goal)
      throw ConfigError("inpaint: repeat_goal " + std::to_string(repeat_goal) +
                        " leaves no free waypoints at horizon " + std::to_string(horizon));
  }
};

/// Classifier-free combination. w = 0 and w = 1 return the respective input
/// unchanged so those settings are exactly the single-model predictions.
inline Eigen::MatrixXd guided_combine(const Eigen::MatrixXd& eps_u, const Eigen::MatrixXd& eps_c,
                                      double w) {
  if (w == 0.0) return eps_u;
  if (w == 1.0) return eps_c;
  return eps_u + w * (eps_c - eps_u);
}

/// Per-waypoint cost sum J over interior waypoints (rows 1..N-2): the
/// goal-attraction term is the squared pose distance to the goal, the
/// collision term is -d(p) inside obstacles and zero outside.
inline double guidance_cost(const World& world, const Eigen::MatrixXd& coords, const Pose& goal,
                            double w_ee, double w_c, CoordMode mode) {
  double j = 0.0;
  for (Eigen::Index t = 1; t + 1 < coords.rows(); ++t) {
    const Eigen::Vector3d p = coords.row(t).head<3>().transpose();
    if (w_ee > 0.0) {
      if (mode == CoordMode::kFullPose) {
        const Pose pose{p, exp_map(coords.row(t).tail<3>().transpose())};
        j += w_ee * se3_distance(pose, goal);
      } else {
        j += w_ee * (p - goal.position).squaredNorm();
      }
    }
    if (w_c > 0.0) {
      const double d = world.signed_distance(p);
      if (d <= 0.0) j += w_c * (-d);
    }
  }
  return j;
}

/// Gradient of guidance_cost with respect to the unnormalized coordinates.
/// Interior waypoints only; the endpoint rows stay zero because inpainting
/// owns them.
inline Eigen::MatrixXd guidance_gradient(const World& world, const Eigen::MatrixXd& coords,
                                         const Pose& goal, double w_ee, double w_c,
                                         CoordMode mode) {
  const Eigen::Index n = coords.rows();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, coords.cols());
  for (Eigen::Index t = 1; t + 1 < n; ++t) {
    const Eigen::Vector3d p = coords.row(t).head<3>().transpose();
    Eigen::Vector3d gp = Eigen::Vector3d::Zero();
    if (w_ee > 0.0) {
      if (mode == CoordMode::kFullPose) {
        const Eigen::Vector3d r = coords.row(t).tail<3>().transpose();
        Eigen::Vector3d dp, dr;
        se3_distance_gradient(p, r, goal, dp, dr);
        gp += w_ee * dp;
        g.row(t).tail<3>() += (w_ee * dr).transpose();
      } else {
        gp += w_ee * 2.0 * (p - goal.position);
      }
    }
    if (w_c > 0.0 && world.signed_distance(p) <= 0.0) {
      gp -= w_c * world.distance_gradient(p);
    }
    g.row(t).head<3>() += gp.transpose();
  }
  return g;
}

/// Overwrites the constrained rows with the normalized start and goal.
inline void apply_inpaint(Eigen::MatrixXd& x, const InpaintSpec& spec, const Model& model) {
  const CoordMode mode = model.mode();
  const Eigen::VectorXd start_row = model.norm.normalize_row(pose_row(spec.start, mode));
  const Eigen::VectorXd goal_row = model.norm.normalize_row(pose_row(spec.goal, mode));
  x.row(0) = start_row.transpose();
  for (int j = 0; j < spec.repeat_goal; ++j) x.row(x.rows() - 1 - j) = goal_row.transpose();
}

/// One reverse-diffusion step k -> k-1 on a normalized trajectory.
/// Order: inpaint, guided noise, clean-signal estimate (clamped), posterior
/// mean, cost shift at the mean, then the stochastic part (none at k = 1).
inline Eigen::MatrixXd reverse_step(const Model& model, Denoiser<float>::Workspace& ws,
                                    const Eigen::MatrixXd& x_in, int k, const GuidanceSpec& spec,
                                    const InpaintSpec* inpaint, const World& world, Rng& rng) {
  model.sched.check_step(k);
  Eigen::MatrixXd x = x_in;
  if (inpaint) apply_inpaint(x, *inpaint, model);

  const Eigen::MatrixXf xf = x.cast<float>();
  auto predict = [&](Condition cond) {
    return model.net.forward(model.params, xf, k, cond, ws).cast<double>().eval();
  };
  Eigen::MatrixXd eps;
  if (spec.uses_cfg()) {
    const Condition cond = Condition::returns(model.rscale.scale(spec.target_return));
    if (spec.w == 0.0) {
      eps = predict(Condition::null());
    } else if (spec.w == 1.0) {
      eps = predict(cond);
    } else {
      eps = guided_combine(predict(Condition::null()), predict(cond), spec.w);
    }
  } else {
    eps = predict(Condition::null());
  }

  Eigen::MatrixXd x0 = model.sched.x0_from_noise(x, k, eps);
  if (spec.clip_x0) x0 = x0.cwiseMax(-spec.c_clip).cwiseMin(spec.c_clip);
  Eigen::MatrixXd mu = model.sched.posterior_mean(x, x0, k);

  if (spec.uses_cost() && spec.lambda > 0.0) {
    if (!inpaint)
      throw ConfigError("guidance: cost strategies need an inpainted goal");
    const Eigen::MatrixXd coords = model.norm.denormalize(mu);
    const Eigen::MatrixXd g =
        guidance_gradient(world, coords, inpaint->goal, spec.w_ee, spec.w_c, model.mode());
    // Mapped to normalized units by dividing by the per-dimension std, a
    // cheap preconditioner that keeps one clip scale meaningful across dims.
    Eigen::MatrixXd shift =
        spec.lambda * (g.array().rowwise() / model.norm.std.transpose().array()).matrix();
    shift = shift.cwiseMax(-spec.step_clip).cwiseMin(spec.step_clip);
    mu -= shift;
  }

  if (k > 1) {
    const double sigma = model.sched.sigma[k];
    Eigen::MatrixXd z(mu.rows(), mu.cols());
    for (Eigen::Index t = 0; t < z.rows(); ++t)
      for (Eigen::Index d = 0; d < z.cols(); ++d) z(t, d) = rng.normal();
    mu += sigma * z;
  }
  return mu;
}

/// One generated path with its scores.
struct PathResult {
  Eigen::MatrixXd coords;  // unnormalized, horizon x dims
  Trajectory traj;
  double dense_return = 0.0;
  double selection_cost = 0.0;  // negated dense return
  double goal_gap = std::numeric_limits<double>::quiet_NaN();
  double min_clearance = std::numeric_limits<double>::infinity();
  int collisions = 0;
};

struct SampleBatch {
  std::vector<PathResult> paths;
  int selected = 0;

  const PathResult& best() const { return paths[static_cast<std::size_t>(selected)]; }
};

/// Argmin with lowest-index tie-breaking.
inline int select_lowest_cost(const std::vector<double>& costs) {
  if (costs.empty()) throw ConfigError("select: empty batch");
  int best = 0;
  for (int p = 1; p < static_cast<int>(costs.size()); ++p)
    if (costs[static_cast<std::size_t>(p)] < costs[static_cast<std::size_t>(best)]) best = p;
  return best;
}

/// Runs the full reverse chain for `count` paths and scores each one. Path p
/// draws from sub-stream (seed, p): the batch is independent of evaluation
/// order, and the same seed reproduces it bitwise. Selection is the lowest
/// selection cost, ties to the lowest index. The goal gap is measured at the
/// last freely generated waypoint, the one just before the inpainted block.
/// A warm start replaces the pure-noise chain head: the chain begins at
/// `warm_step` from the forward-noised `warm_x0` (normalized coordinates,
/// horizon x dims) instead of at K from N(0, I).
inline SampleBatch sample_paths(const Model& model, const World& world, int count, int horizon,
                                const GuidanceSpec& spec, const InpaintSpec* inpaint,
                                std::uint64_t seed, const Eigen::MatrixXd* warm_x0 = nullptr,
                                int warm_step = 0) {
  if (count < 1) throw ConfigError("sample: count must be >= 1");
  if (horizon < 2) throw ConfigError("sample: horizon must be >= 2");
  spec.validate();
  if (inpaint) inpaint->validate(horizon);
  if (warm_x0) {
    if (warm_step < 1 || warm_step > model.sched.K)
      throw ConfigError("sample: warm_step must be in [1, K]");
    if (warm_x0->rows() != horizon || warm_x0->cols() != model.cfg.dims)
      throw ConfigError("sample: warm start shape must be horizon x dims");
  }

  const CoordMode mode = model.mode();
  const RewardParams dense{RewardKind::kDense, model.reward.a, model.reward.gamma};
  SampleBatch batch;
  batch.paths.resize(static_cast<std::size_t>(count));

  Denoiser<float>::Workspace ws;
  for (int p = 0; p < count; ++p) {
    Rng rng = Rng::derived(seed, static_cast<std::uint64_t>(p));
    Eigen::MatrixXd x(horizon, model.cfg.dims);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
      for (Eigen::Index d = 0; d < x.cols(); ++d) x(t, d) = rng.normal();
    const int start_step = warm_x0 ? warm_step : model.sched.K;
    if (warm_x0) x = model.sched.forward_sample(*warm_x0, warm_step, x);
    for (int k = start_step; k >= 1; --k)
      x = reverse_step(model, ws, x, k, spec, inpaint, world, rng);
    if (inpaint) apply_inpaint(x, *inpaint, model);

    PathResult& res = batch.paths[static_cast<std::size_t>(p)];
    res.coords = model.norm.denormalize(x);
    res.traj = unflatten(res.coords, mode,
                         inpaint ? inpaint->start.orientation : Eigen::Quaterniond::Identity());
    res.dense_return = discounted_return(world, res.coords, dense);
    res.selection_cost = -res.dense_return;
    for (Eigen::Index t = 0; t < res.coords.rows(); ++t) {
      const double d = world.signed_distance(res.coords.row(t).head<3>().transpose());
      res.min_clearance = std::min(res.min_clearance, d);
      if (d <= 0.0) ++res.collisions;
    }
    if (inpaint) {
      const Eigen::Index free_end = res.coords.rows() - 1 - inpaint->repeat_goal;
      res.goal_gap =
          (res.coords.row(free_end).head<3>().transpose() - inpaint->goal.position).norm();
    }
  }
  std::vector<double> costs(batch.paths.size());
  for (std::size_t p = 0; p < batch.paths.size(); ++p) costs[p] = batch.paths[p].selection_cost;
  batch.selected = select_lowest_cost(costs);
  return batch;
}

}  // namespace ddp

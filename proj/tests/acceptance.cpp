// Acceptance gate: eleven checks covering the math oracles, the guided
// sampler, desk-scale model quality, closed-loop planning, and end-to-end
// determinism. Each check prints one [PASS]/[FAIL] line with its measured
// evidence; the process exits with the number of failures. Thresholds are
// pinned here and are not tunable from outside.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "ddp/dataset.hpp"
#include "ddp/planner.hpp"
#include "ddp/trainer.hpp"

namespace {

namespace fs = std::filesystem;

int g_failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] %2d. %s (%s)\n", ok ? "PASS" : "FAIL", idx, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

void info(const std::string& msg) {
  std::fprintf(stderr, "[info] %s\n", msg.c_str());
  std::fflush(stderr);
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double secs() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---- fixtures ----

ddp::World desk_world() {
  ddp::World w;
  w.bounds = {Eigen::Vector3d(0.0, 0.0, 0.5), Eigen::Vector3d(0.5, 0.5, 0.5)};
  w.obstacles = {{Eigen::Vector3d(0.0, 0.0, 0.45), Eigen::Vector3d(0.1, 0.2, 0.25)}};
  return w;
}

// The straight segment between these poses crosses the obstacle, so every
// collision-free path has to bend around it.
const ddp::Pose kStart{Eigen::Vector3d(-0.35, 0.0, 0.35), Eigen::Quaterniond::Identity()};
const ddp::Pose kGoal{Eigen::Vector3d(0.35, 0.0, 0.35), Eigen::Quaterniond::Identity()};

ddp::GuidanceSpec guidance(ddp::Strategy s, double target_return) {
  ddp::GuidanceSpec spec;
  spec.strategy = s;
  spec.target_return = target_return;
  spec.apply_strategy_rules();
  return spec;
}

ddp::Model train_desk_model(ddp::RewardKind kind, std::uint64_t seed, double* train_secs) {
  const ddp::World world = desk_world();
  ddp::RewardParams reward;
  reward.kind = kind;
  info(std::string("generating 60000 training paths (") + ddp::reward_kind_name(kind) + ")");
  ddp::Dataset ds =
      ddp::generate_dataset(world, 60000, 16, ddp::CoordMode::kPosition, reward, seed);
  ddp::normalize_dataset(ds);

  ddp::DenoiserConfig cfg;
  cfg.horizon = 16;
  cfg.dims = 3;
  cfg.widths = {24, 48};
  cfg.step_embed = 24;
  cfg.cond_embed = 24;
  cfg.kernel = 5;
  cfg.groups = 8;
  ddp::Model model = ddp::make_model(cfg, ddp::NoiseSchedule::cosine(200), ds, seed);
  info("desk model has " + std::to_string(model.net.param_count()) + " parameters");

  ddp::TrainConfig tcfg;
  tcfg.steps = 20000;
  tcfg.batch = 32;
  tcfg.lr = 2e-4;
  tcfg.drop_prob = 0.25;
  tcfg.log_interval = 1000;

  Timer timer;
  ddp::train_model(model, ds, tcfg, seed, nullptr, [&](int step, float loss) {
    info(std::string(ddp::reward_kind_name(kind)) + " step " + std::to_string(step) + " loss " +
         fmt(loss));
  });
  *train_secs = timer.secs();
  return model;
}

// Largest distance from any waypoint to the segment between the endpoints.
double max_chord_deviation(const Eigen::MatrixXd& coords) {
  const Eigen::Vector3d a = coords.row(0).head<3>().transpose();
  const Eigen::Vector3d b = coords.row(coords.rows() - 1).head<3>().transpose();
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  double worst = 0.0;
  for (Eigen::Index t = 0; t < coords.rows(); ++t) {
    const Eigen::Vector3d p = coords.row(t).head<3>().transpose();
    const double s = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    worst = std::max(worst, (p - (a + s * ab)).norm());
  }
  return worst;
}

int collision_free_count(const ddp::SampleBatch& batch) {
  int n = 0;
  for (const ddp::PathResult& p : batch.paths)
    if (p.collisions == 0) ++n;
  return n;
}

double mean_goal_gap(const ddp::SampleBatch& batch) {
  double s = 0.0;
  for (const ddp::PathResult& p : batch.paths) s += p.goal_gap;
  return s / static_cast<double>(batch.paths.size());
}

// ---- criteria 1-4: math oracles ----

bool schedule_oracle(std::string& detail) {
  const int K = 200, trials = 10000;
  const double x0 = 0.7;
  const ddp::NoiseSchedule sched = ddp::NoiseSchedule::cosine(K);
  double worst_mean = 0.0, worst_var = 0.0;
  ddp::Rng rng(202);
  for (const int k : {1, K / 2, K}) {
    std::vector<double> xs(trials);
    for (int i = 0; i < trials; ++i) {
      double x = x0;
      for (int j = 1; j <= k; ++j)
        x = std::sqrt(1.0 - sched.beta[j]) * x + std::sqrt(sched.beta[j]) * rng.normal();
      xs[static_cast<std::size_t>(i)] = x;
    }
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= trials;
    double var = 0.0;
    for (double v : xs) var += (v - mean) * (v - mean);
    var /= trials - 1;

    const double ab = sched.alpha_bar[k];
    const double mean_err = std::abs(mean - std::sqrt(ab) * x0);
    const double var_err = std::abs(var - (1.0 - ab));
    const double mean_se = std::sqrt((1.0 - ab) / trials);
    const double var_se = (1.0 - ab) * std::sqrt(2.0 / (trials - 1));
    worst_mean = std::max(worst_mean, mean_err / mean_se);
    worst_var = std::max(worst_var, var_err / var_se);
  }
  detail = "max |mean err| " + fmt(worst_mean) + " se, max |var err| " + fmt(worst_var) + " se";
  return worst_mean < 3.0 && worst_var < 3.0;
}

bool posterior_oracle(std::string& detail) {
  const ddp::NoiseSchedule sched = ddp::NoiseSchedule::cosine(200);
  ddp::Rng rng(203);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int k = static_cast<int>(rng.uniform_int(2, sched.K));
    const double x0 = 2.0 * rng.uniform() - 1.0;
    const double xk = 2.0 * rng.uniform() - 1.0;

    // Bayes by Gaussian product: N(x_k; sqrt(1-b) x, b) * N(x; sqrt(ab') x0, 1-ab').
    const double beta = sched.beta[k];
    const double ab_prev = sched.alpha_bar[k - 1];
    const double precision = (1.0 - beta) / beta + 1.0 / (1.0 - ab_prev);
    const double lin = std::sqrt(1.0 - beta) * xk / beta +
                       std::sqrt(ab_prev) * x0 / (1.0 - ab_prev);
    const double mean_ref = lin / precision;
    const double var_ref = 1.0 / precision;

    Eigen::MatrixXd mx(1, 1), m0(1, 1);
    mx << xk;
    m0 << x0;
    const double mean = sched.posterior_mean(mx, m0, k)(0, 0);
    worst = std::max(worst, std::abs(mean - mean_ref));
    worst = std::max(worst, std::abs(sched.beta_tilde[k] - var_ref));
  }
  detail = "max deviation " + fmt(worst);
  return worst < 1e-8;
}

bool gradient_oracle(std::string& detail) {
  // Denoiser loss gradient on a tiny config, 100 random parameter coordinates.
  ddp::DenoiserConfig cfg;
  cfg.horizon = 4;
  cfg.dims = 2;
  cfg.widths = {8};
  cfg.step_embed = 8;
  cfg.cond_embed = 8;
  cfg.kernel = 3;
  cfg.groups = 4;
  ddp::Denoiser<double> net(cfg);
  ddp::Rng rng(204);
  Eigen::VectorXd params;
  net.init_params(params, rng);

  std::vector<ddp::Denoiser<double>::Prepared> batch;
  for (int b = 0; b < 3; ++b) {
    ddp::Denoiser<double>::Prepared ex;
    ex.x.resize(4, 2);
    ex.target.resize(4, 2);
    for (int t = 0; t < 4; ++t)
      for (int d = 0; d < 2; ++d) {
        ex.x(t, d) = rng.normal();
        ex.target(t, d) = rng.normal();
      }
    ex.k = rng.uniform_int(1, 50);
    ex.cond = (b % 2 == 1) ? ddp::Condition::returns(rng.uniform()) : ddp::Condition::null();
    batch.push_back(ex);
  }
  Eigen::VectorXd grad, scratch;
  ddp::Denoiser<double>::Workspace ws;
  net.loss_and_gradient(params, batch, grad, ws);

  double worst_net = 0.0;
  for (int c = 0; c < 100; ++c) {
    const auto i = static_cast<Eigen::Index>(
        rng.uniform_int(0, static_cast<int>(net.param_count()) - 1));
    const double saved = params[i];
    const double h = 1e-5 * std::max(1.0, std::abs(saved));
    params[i] = saved + h;
    const double lp = net.loss_and_gradient(params, batch, scratch, ws);
    params[i] = saved - h;
    const double lm = net.loss_and_gradient(params, batch, scratch, ws);
    params[i] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    worst_net = std::max(worst_net, std::abs(fd - grad[i]) /
                                        std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
  }

  // Guidance gradient against finite differences of the guidance cost, on a
  // random trajectory kept away from the measure-zero nondifferentiable sets.
  const ddp::World world = desk_world();
  double worst_guide = 0.0;
  Eigen::MatrixXd coords(6, 3);
  for (int t = 0; t < 6; ++t) {
    coords(t, 0) = 0.25 + 0.2 * rng.uniform();
    coords(t, 1) = 0.25 + 0.2 * rng.uniform();
    coords(t, 2) = 0.1 + 0.1 * rng.uniform();
  }
  // Interior point whose nearest face is uniquely +x (margins to the other
  // faces are far larger than the finite-difference step).
  coords.row(2) = Eigen::RowVector3d(0.03, -0.05, 0.5);
  const double w_ee = 1e-3, w_c = 1e-3;
  const Eigen::MatrixXd g =
      ddp::guidance_gradient(world, coords, kGoal, w_ee, w_c, ddp::CoordMode::kPosition);
  for (Eigen::Index t = 1; t + 1 < coords.rows(); ++t)
    for (Eigen::Index d = 0; d < 3; ++d) {
      const double saved = coords(t, d);
      const double h = 1e-5;
      coords(t, d) = saved + h;
      const double jp =
          ddp::guidance_cost(world, coords, kGoal, w_ee, w_c, ddp::CoordMode::kPosition);
      coords(t, d) = saved - h;
      const double jm =
          ddp::guidance_cost(world, coords, kGoal, w_ee, w_c, ddp::CoordMode::kPosition);
      coords(t, d) = saved;
      const double fd = (jp - jm) / (2.0 * h);
      worst_guide = std::max(worst_guide, std::abs(fd - g(t, d)) /
                                              std::max({std::abs(fd), std::abs(g(t, d)), 1e-6}));
    }

  detail = "net max rel err " + fmt(worst_net) + ", guidance max rel err " + fmt(worst_guide);
  return worst_net < 1e-4 && worst_guide < 1e-4;
}

bool cfg_degeneracy(std::string& detail) {
  const ddp::World world = desk_world();
  ddp::Dataset ds =
      ddp::generate_dataset(world, 40, 16, ddp::CoordMode::kPosition, ddp::RewardParams{}, 7);
  ddp::normalize_dataset(ds);
  ddp::DenoiserConfig cfg;
  cfg.horizon = 16;
  cfg.dims = 3;
  cfg.widths = {8, 8};
  cfg.step_embed = 8;
  cfg.cond_embed = 8;
  cfg.kernel = 3;
  cfg.groups = 4;
  const ddp::Model model = ddp::make_model(cfg, ddp::NoiseSchedule::cosine(20), ds, 7);

  ddp::Rng rng(205);
  Eigen::MatrixXd eu(16, 3), ec(16, 3), x(16, 3);
  for (int t = 0; t < 16; ++t)
    for (int d = 0; d < 3; ++d) {
      eu(t, d) = rng.normal();
      ec(t, d) = rng.normal();
      x(t, d) = rng.normal();
    }
  bool ok = ddp::guided_combine(eu, ec, 0.0) == eu && ddp::guided_combine(eu, ec, 1.0) == ec;

  ddp::InpaintSpec inpaint{kStart, kGoal, 1};
  ddp::Denoiser<float>::Workspace ws;

  // w = 0 runs the same pipeline as a purely unconditional chain.
  ddp::GuidanceSpec w0 = guidance(ddp::Strategy::kCfgDense, -0.01);
  w0.w = 0.0;
  ddp::GuidanceSpec uncond = guidance(ddp::Strategy::kCostOnly, -0.01);
  uncond.lambda = 0.0;
  ddp::Rng r1(206), r2(206);
  ok = ok && ddp::reverse_step(model, ws, x, 7, w0, &inpaint, world, r1) ==
                 ddp::reverse_step(model, ws, x, 7, uncond, &inpaint, world, r2);

  // w = 1 at the deterministic final step equals the conditional model alone.
  ddp::GuidanceSpec w1 = guidance(ddp::Strategy::kCfgDense, -0.01);
  w1.w = 1.0;
  ddp::Rng r3(207);
  const Eigen::MatrixXd a = ddp::reverse_step(model, ws, x, 1, w1, &inpaint, world, r3);
  Eigen::MatrixXd y = x;
  ddp::apply_inpaint(y, inpaint, model);
  const Eigen::MatrixXd eps =
      model.net.forward(model.params, y.cast<float>().eval(), 1,
                        ddp::Condition::returns(model.rscale.scale(w1.target_return)), ws)
          .cast<double>();
  Eigen::MatrixXd x0 = model.sched.x0_from_noise(y, 1, eps);
  x0 = x0.cwiseMax(-w1.c_clip).cwiseMin(w1.c_clip);
  ok = ok && a == model.sched.posterior_mean(y, x0, 1);

  detail = ok ? "combination and both reverse-step branches bit-exact" : "mismatch";
  return ok;
}

// ---- criterion 11: determinism across the CLI pipeline ----

int run_cmd(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa.good() || !fb.good()) return false;
  const std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return !sa.empty() && sa == sb;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
}

bool determinism(std::string& detail) {
  const fs::path root = fs::temp_directory_path() / "ddp_acceptance_determinism";
  fs::remove_all(root);
  const fs::path dirs[2] = {root / "a", root / "b"};
  for (const fs::path& d : dirs) fs::create_directories(d);

  const fs::path world = root / "world.json";
  write_text(world, R"({
  "bounds": {"center": [0.0, 0.0, 0.5], "half_extents": [0.5, 0.5, 0.5]},
  "obstacles": [{"center": [0.0, 0.0, 0.45], "half_extents": [0.1, 0.2, 0.25]}]
})");
  const fs::path gen_cfg = root / "gen.json";
  write_text(gen_cfg, std::string(R"({
  "seed": 9,
  "world_file": ")") + world.string() + R"(",
  "dataset": {"count": 500, "waypoints": 16, "mode": "position",
              "reward": {"kind": "dense", "a": 46.0, "gamma": 0.99}}
})");
  const fs::path train_cfg = root / "train.json";
  write_text(train_cfg, R"({
  "seed": 9,
  "model": {"arch": "temporal-unet", "widths": [8, 8], "step_embed": 8, "cond_embed": 8,
            "kernel": 3, "groups": 4, "schedule": {"K": 20, "s": 0.008}},
  "train": {"steps": 300, "batch": 8, "lr": 1e-3, "drop_prob": 0.25, "log_interval": 50}
})");
  const fs::path sweep_cfg = root / "sweep.json";
  write_text(sweep_cfg, R"({
  "seed": 9,
  "sweep": {"start": [-0.35, 0.0, 0.35], "goal": [0.35, 0.0, 0.35],
            "horizons": [16], "returns": [-0.01], "repeats": [1], "paths_per_cell": 3},
  "sample": {"strategy": "cfg-dense"}
})");
  const fs::path plan_cfg = root / "plan.json";
  write_text(plan_cfg, R"({
  "seed": 9,
  "plan": {"start": [-0.35, 0.0, 0.35], "goal": [0.35, 0.0, 0.35],
           "horizon": 16, "track": 8, "batch": 2, "repeat_goal": 1,
           "delta": 0.05, "max_replans": 2},
  "sample": {"strategy": "cfg-dense"}
})");

  const std::string cli = DDP_CLI_PATH;
  for (const fs::path& d : dirs) {
    const std::string out = d.string();
    if (run_cmd(cli + " gen-data --config " + gen_cfg.string() + " --out " + out) != 0 ||
        run_cmd(cli + " train --config " + train_cfg.string() + " --dataset " + out +
                "/dataset.ddpt --out " + out) != 0 ||
        run_cmd(cli + " sweep --config " + sweep_cfg.string() + " --checkpoint " + out +
                "/model_final.ddpc --world " + world.string() + " --out " + out) != 0 ||
        run_cmd(cli + " plan --config " + plan_cfg.string() + " --checkpoint " + out +
                "/model_final.ddpc --world " + world.string() + " --out " + out) != 0) {
      detail = "a pipeline stage exited nonzero";
      return false;
    }
  }

  const char* files[] = {"dataset.ddpt",           "model_final.ddpc",
                         "loss.csv",               "sweep.csv",
                         "batch_h16_r-0.01_i1.csv", "batch_h16_r-0.01_i1.json",
                         "batch_h16_r-0.01_i1.svg", "trace.json",
                         "path.csv",               "plan.svg"};
  int matched = 0;
  std::string first_bad;
  for (const char* f : files) {
    if (same_bytes(dirs[0] / f, dirs[1] / f)) {
      ++matched;
    } else if (first_bad.empty()) {
      first_bad = f;
    }
  }
  const int total = static_cast<int>(std::size(files));
  detail = std::to_string(matched) + "/" + std::to_string(total) + " artifacts byte-identical";
  if (!first_bad.empty()) detail += ", first mismatch: " + first_bad;
  fs::remove_all(root);
  return matched == total;
}

}  // namespace

int main() {
  const ddp::World world = desk_world();

  {
    Timer t;
    std::string d;
    const bool ok = schedule_oracle(d);
    const double s = t.secs();
    report(1, "forward diffusion closed form matches the iterated kernel", ok && s < 10.0,
           d + ", " + fmt(s) + " s");
  }
  {
    Timer t;
    std::string d;
    const bool ok = posterior_oracle(d);
    const double s = t.secs();
    report(2, "reverse posterior matches the direct Gaussian product", ok && s < 1.0,
           d + ", " + fmt(s) + " s");
  }
  {
    Timer t;
    std::string d;
    const bool ok = gradient_oracle(d);
    const double s = t.secs();
    report(3, "analytic gradients match central finite differences", ok && s < 60.0,
           d + ", " + fmt(s) + " s");
  }
  {
    Timer t;
    std::string d;
    const bool ok = cfg_degeneracy(d);
    const double s = t.secs();
    report(4, "guidance weights 0 and 1 reproduce the single-model predictions", ok && s < 1.0,
           d + ", " + fmt(s) + " s");
  }

  // Desk-scale dense model shared by criteria 5-10.
  double dense_secs = 0.0;
  const ddp::Model dense = train_desk_model(ddp::RewardKind::kDense, 41, &dense_secs);
  info("dense desk training took " + fmt(dense_secs) + " s");

  ddp::SampleBatch batch_i1, batch_i5;
  {
    Timer t;
    ddp::InpaintSpec inpaint{kStart, kGoal, 1};
    batch_i1 = ddp::sample_paths(dense, world, 30, 64,
                                 guidance(ddp::Strategy::kCfgDense, -0.01), &inpaint, 501);
    inpaint.repeat_goal = 5;
    batch_i5 = ddp::sample_paths(dense, world, 30, 64,
                                 guidance(ddp::Strategy::kCfgDense, -0.01), &inpaint, 501);
    const double s = t.secs();

    double worst = 0.0;
    const auto endpoint_error = [&](const ddp::SampleBatch& batch, int repeat) {
      for (const ddp::PathResult& p : batch.paths) {
        worst = std::max(worst,
                         (p.coords.row(0).transpose().head<3>() - kStart.position).norm());
        for (int j = 0; j < repeat; ++j)
          worst = std::max(worst, (p.coords.row(p.coords.rows() - 1 - j).transpose().head<3>() -
                                   kGoal.position).norm());
      }
    };
    endpoint_error(batch_i1, 1);
    endpoint_error(batch_i5, 5);
    report(5, "inpainted endpoints are exact after denormalization",
           worst < 1e-6 && s < 120.0,
           "max endpoint error " + fmt(worst) + " m over 60 paths, " + fmt(s) + " s");
  }

  {
    Timer t;
    ddp::SampleBatch uncond = ddp::sample_paths(
        dense, world, 200, 16, [] {
          ddp::GuidanceSpec g;
          g.strategy = ddp::Strategy::kCfgDense;
          g.w = 0.0;
          return g;
        }(), nullptr, 601);
    int straight = 0;
    const double limit = 0.10 * world.diagonal();
    for (const ddp::PathResult& p : uncond.paths)
      if (max_chord_deviation(p.coords) < limit) ++straight;
    const double frac = straight / 200.0;
    report(6, "unconditional samples stay near straight lines",
           frac >= 0.90 && dense_secs <= 1800.0,
           fmt(100.0 * frac) + "% under " + fmt(limit) + " m deviation, training " +
               fmt(dense_secs) + " s, sampling " + fmt(t.secs()) + " s");
  }

  {
    Timer t;
    ddp::InpaintSpec inpaint{kStart, kGoal, 1};
    const ddp::SampleBatch long_h = ddp::sample_paths(
        dense, world, 30, 64, guidance(ddp::Strategy::kCfgDense, -0.01), &inpaint, 701);
    const ddp::SampleBatch short_h = ddp::sample_paths(
        dense, world, 30, 16, guidance(ddp::Strategy::kCfgDense, -0.01), &inpaint, 701);
    const double frac_long = collision_free_count(long_h) / 30.0;
    const double frac_short = collision_free_count(short_h) / 30.0;
    report(7, "return conditioning clears obstacles only with long horizons",
           frac_long >= 0.70 && frac_short < 0.30,
           "collision-free " + fmt(100.0 * frac_long) + "% at horizon 64 vs " +
               fmt(100.0 * frac_short) + "% at horizon 16, " + fmt(t.secs()) + " s");
  }

  {
    Timer t;
    ddp::InpaintSpec inpaint{kStart, kGoal, 10};
    const ddp::SampleBatch batch_i10 = ddp::sample_paths(
        dense, world, 30, 64, guidance(ddp::Strategy::kCfgDense, -0.01), &inpaint, 501);
    const double g1 = mean_goal_gap(batch_i1);
    const double g5 = mean_goal_gap(batch_i5);
    const double g10 = mean_goal_gap(batch_i10);
    const double improvement = (g5 - g10) / g5;
    report(8, "repeating the goal tightens the final approach",
           g5 < g1 && improvement <= 0.10,
           "mean gap " + fmt(g1) + " m at 1 repeat, " + fmt(g5) + " m at 5, " + fmt(g10) +
               " m at 10 (" + fmt(100.0 * improvement) + "% further), " + fmt(t.secs()) + " s");
  }

  double sparse_secs = 0.0;
  const ddp::Model sparse = train_desk_model(ddp::RewardKind::kSparse, 42, &sparse_secs);
  info("sparse desk training took " + fmt(sparse_secs) + " s");

  {
    Timer t;
    ddp::InpaintSpec inpaint{kStart, kGoal, 1};
    const ddp::SampleBatch dense_b = ddp::sample_paths(
        dense, world, 30, 64, guidance(ddp::Strategy::kCfgDense, -0.01), &inpaint, 901);
    const ddp::SampleBatch sparse_b = ddp::sample_paths(
        sparse, world, 30, 64, guidance(ddp::Strategy::kCfgSparse, 0.0), &inpaint, 901);
    double dense_clear = 0.0, sparse_clear = 0.0;
    int dense_n = 0, sparse_n = 0;
    for (const ddp::PathResult& p : dense_b.paths)
      if (p.collisions == 0) {
        dense_clear += p.min_clearance;
        ++dense_n;
      }
    for (const ddp::PathResult& p : sparse_b.paths)
      if (p.collisions == 0) {
        sparse_clear += p.min_clearance;
        ++sparse_n;
      }
    const bool have = dense_n > 0 && sparse_n > 0;
    const double dc = have ? dense_clear / dense_n : 0.0;
    const double sc = have ? sparse_clear / sparse_n : 0.0;
    report(9, "sparse-reward paths run closer to obstacles", have && sc < dc,
           "mean min clearance " + fmt(sc) + " m sparse (" + std::to_string(sparse_n) +
               " free) vs " + fmt(dc) + " m dense (" + std::to_string(dense_n) + " free), " +
               fmt(t.secs()) + " s");
  }

  {
    Timer t;
    ddp::PlanConfig cfg;
    cfg.guidance = guidance(ddp::Strategy::kCfgDense, -0.01);
    int reached = 0;
    for (int trial = 0; trial < 10; ++trial) {
      const ddp::ExecutionTrace trace =
          ddp::plan_path(dense, world, kStart, kGoal, cfg, 1000 + trial);
      if (trace.reached) ++reached;
    }
    const double s = t.secs();
    report(10, "closed-loop planning reaches the goal", reached >= 8 && s < 1200.0,
           std::to_string(reached) + "/10 seeds reached within 0.05 m, " + fmt(s) + " s");
  }

  {
    Timer t;
    std::string d;
    const bool ok = determinism(d);
    report(11, "every pipeline stage is byte-identical across reruns", ok,
           d + ", " + fmt(t.secs()) + " s");
  }

  std::printf("%s: %d/11 criteria passed\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
              11 - g_failures);
  return g_failures;
}

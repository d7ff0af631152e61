// Command-line front end: gen-data, train, sweep, plan, eval.
// stdout carries exactly one JSON summary line per run; diagnostics and
// progress go to stderr. Exit codes: 0 ok, 2 config, 3 io, 4 numeric
// divergence, 5 infeasible instance, 1 anything else.

#include <CLI11.hpp>
#include <atomic>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ddp/app_config.hpp"
#include "ddp/checkpoint.hpp"
#include "ddp/dataset.hpp"
#include "ddp/planner.hpp"
#include "ddp/sampler.hpp"
#include "ddp/svg.hpp"
#include "ddp/trainer.hpp"

namespace {

using nlohmann::ordered_json;

struct CommonArgs {
  std::string config;
  std::string out = ".";
  std::string world;
  std::uint64_t seed = 0;
  int jobs = 1;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config, "JSON config file");
  sub->add_option("--out", a.out, "output directory");
  a.seed_opt = sub->add_option("--seed", a.seed, "RNG seed (overrides config)");
  sub->add_option("--jobs", a.jobs, "max concurrent workers")->check(CLI::PositiveNumber);
}

std::uint64_t resolve_seed(const CommonArgs& a, const nlohmann::json& root) {
  if (a.seed_opt && a.seed_opt->count() > 0) return a.seed;
  if (root.contains("seed")) return root.at("seed").get<std::uint64_t>();
  return 0;
}

void emit(const ordered_json& summary) { std::cout << summary.dump() << "\n"; }

ordered_json pose_json(const ddp::Pose& p, ddp::CoordMode mode) {
  return ordered_json(ddp::pose_to_json(p, mode));
}

// ---- gen-data ----

int cmd_gen_data(const CommonArgs& args, int count_override, int waypoints_override) {
  const auto root = ddp::load_config_file(args.config);
  const std::uint64_t seed = resolve_seed(args, root);
  const ddp::World world = ddp::world_from_config(root, args.world);
  ddp::DatasetSection sec = ddp::dataset_section(root);
  if (count_override > 0) sec.count = count_override;
  if (waypoints_override > 0) sec.waypoints = waypoints_override;

  const ddp::Dataset ds =
      ddp::generate_dataset(world, sec.count, sec.waypoints, sec.mode, sec.reward, seed);
  ddp::ensure_directory(args.out);
  const std::string path = args.out + "/dataset.ddpt";
  ddp::save_dataset(ds, path);

  int collide_paths = 0;
  for (int p = 0; p < ds.num_paths; ++p) {
    const Eigen::MatrixXd m = ds.path_d(p);
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
      if (world.in_collision(m.row(t).head<3>().transpose())) {
        ++collide_paths;
        break;
      }
    }
  }
  const double rmin = ds.returns_min();
  const double rmax = ds.returns_max();
  std::vector<int> hist(10, 0);
  for (float r : ds.returns) {
    int b = rmax > rmin ? static_cast<int>((static_cast<double>(r) - rmin) / (rmax - rmin) * 10.0)
                        : 0;
    if (b > 9) b = 9;
    if (b < 0) b = 0;
    ++hist[static_cast<std::size_t>(b)];
  }

  ordered_json out;
  out["command"] = "gen-data";
  out["paths"] = ds.num_paths;
  out["waypoints"] = ds.waypoints;
  out["dims"] = ds.dims;
  out["seed"] = seed;
  out["collision_path_fraction"] =
      static_cast<double>(collide_paths) / static_cast<double>(ds.num_paths);
  out["return_min"] = rmin;
  out["return_max"] = rmax;
  out["return_histogram"] = hist;
  out["dataset"] = path;
  emit(out);
  return 0;
}

// ---- train ----

int cmd_train(const CommonArgs& args, const std::string& dataset_path,
              const std::string& resume_path) {
  const auto root = ddp::load_config_file(args.config);
  const std::uint64_t seed = resolve_seed(args, root);
  if (dataset_path.empty()) throw ddp::ConfigError("train: --dataset is required");

  ddp::Dataset ds = ddp::load_dataset(dataset_path);
  if (!ds.normalized) ddp::normalize_dataset(ds);

  ddp::ModelSection ms = ddp::model_section(root);
  ms.cfg.dims = ds.dims;
  ms.cfg.horizon = ds.waypoints;
  const ddp::TrainConfig tcfg = ddp::train_section(root);

  ddp::ensure_directory(args.out);
  ddp::Model model = resume_path.empty()
                         ? ddp::make_model(ms.cfg, ddp::NoiseSchedule::cosine(ms.K, ms.s), ds,
                                           seed)
                         : ddp::load_checkpoint(resume_path);
  if (!resume_path.empty()) {
    if (model.cfg.dims != ds.dims)
      throw ddp::ConfigError("train: resume checkpoint dims do not match the dataset");
    std::cerr << "resuming from " << resume_path << " at step " << model.train_step << "\n";
  }

  auto checkpoint_cb = [&](int step, const ddp::Model& m) {
    const std::string p = args.out + "/model_step" + std::to_string(step) + ".ddpc";
    ddp::save_checkpoint(m, p);
    std::cerr << "checkpoint " << p << "\n";
  };
  auto progress_cb = [&](int step, float loss) {
    std::cerr << "step " << step << " loss " << ddp::format_float(loss) << "\n";
  };

  const ddp::TrainResult res = ddp::train_model(model, ds, tcfg, seed, checkpoint_cb, progress_cb);

  const std::string ckpt_path = args.out + "/model_final.ddpc";
  ddp::save_checkpoint(model, ckpt_path);
  const std::string loss_path = args.out + "/loss.csv";
  {
    std::string csv = "step,loss\n";
    for (const auto& [step, loss] : res.loss_log)
      csv += std::to_string(step) + "," + ddp::format_float(loss) + "\n";
    ddp::write_file_text(loss_path, csv);
  }

  ordered_json out;
  out["command"] = "train";
  out["steps"] = tcfg.steps;
  out["final_loss"] = static_cast<double>(res.final_loss);
  out["param_count"] = static_cast<std::int64_t>(model.net.param_count());
  out["seed"] = seed;
  out["checkpoint"] = ckpt_path;
  out["loss_csv"] = loss_path;
  emit(out);
  return 0;
}

// ---- shared sampling helpers ----

void write_batch_csv(const std::string& path, const ddp::SampleBatch& batch, int dims) {
  std::string csv = dims == 3 ? "path_index,waypoint_index,x,y,z\n"
                              : "path_index,waypoint_index,x,y,z,rx,ry,rz\n";
  for (std::size_t p = 0; p < batch.paths.size(); ++p) {
    const Eigen::MatrixXd& m = batch.paths[p].coords;
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
      csv += std::to_string(p) + "," + std::to_string(t);
      for (Eigen::Index d = 0; d < m.cols(); ++d) csv += "," + ddp::format_double(m(t, d));
      csv += "\n";
    }
  }
  ddp::write_file_text(path, csv);
}

std::vector<Eigen::MatrixXd> read_batch_csv(const std::string& path) {
  const std::string text = ddp::read_file_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ddp::FormatError(path + ": empty batch CSV");
  std::map<int, std::vector<std::pair<int, std::vector<double>>>> rows;
  int ncols = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 5) throw ddp::FormatError(path + ": batch CSV row with too few columns");
    if (ncols < 0) ncols = static_cast<int>(vals.size());
    if (static_cast<int>(vals.size()) != ncols)
      throw ddp::FormatError(path + ": ragged batch CSV");
    const int p = static_cast<int>(vals[0]);
    const int t = static_cast<int>(vals[1]);
    rows[p].emplace_back(t, std::vector<double>(vals.begin() + 2, vals.end()));
  }
  std::vector<Eigen::MatrixXd> out;
  for (auto& [p, wps] : rows) {
    std::sort(wps.begin(), wps.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    Eigen::MatrixXd m(static_cast<Eigen::Index>(wps.size()),
                      static_cast<Eigen::Index>(ncols - 2));
    for (std::size_t i = 0; i < wps.size(); ++i)
      for (int d = 0; d + 2 < ncols; ++d)
        m(static_cast<Eigen::Index>(i), d) = wps[i].second[static_cast<std::size_t>(d)];
    out.push_back(std::move(m));
  }
  return out;
}

// ---- sweep ----

struct CellMetrics {
  int horizon = 0;
  double target_return = 0.0;
  int repeat = 0;
  int paths = 0;
  double collision_free = 0.0;
  double mean_min_clearance = 0.0;
  double mean_goal_gap = 0.0;
  double mean_dense_return = 0.0;
  std::string csv_path, svg_path;
  int error_code = 0;
  std::string error;
};

int error_code_of(const std::exception& e) {
  if (dynamic_cast<const ddp::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const ddp::IoError*>(&e)) return 3;
  if (dynamic_cast<const ddp::NumericError*>(&e)) return 4;
  if (dynamic_cast<const ddp::InfeasibleError*>(&e)) return 5;
  return 1;
}

int cmd_sweep(const CommonArgs& args, const std::string& checkpoint_path) {
  const auto root = ddp::load_config_file(args.config);
  const std::uint64_t seed = resolve_seed(args, root);
  if (checkpoint_path.empty()) throw ddp::ConfigError("sweep: --checkpoint is required");

  const ddp::Model model = ddp::load_checkpoint(checkpoint_path);
  const ddp::World world = ddp::world_from_config(root, args.world);
  const ddp::GuidanceSpec base = ddp::sample_section(root);
  ddp::check_strategy_compatibility(base, model);
  const ddp::SweepSection sweep = ddp::sweep_section(root);
  ddp::ensure_directory(args.out);

  struct Cell {
    int horizon, repeat;
    double ret;
  };
  std::vector<Cell> cells;
  for (int h : sweep.horizons)
    for (double c : sweep.returns)
      for (int i : sweep.repeats) cells.push_back({h, i, c});

  std::vector<CellMetrics> metrics(cells.size());
  std::vector<ddp::SampleBatch> batches(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t ci; (ci = next.fetch_add(1)) < cells.size();) {
      const Cell& cell = cells[ci];
      CellMetrics& m = metrics[ci];
      m.horizon = cell.horizon;
      m.target_return = cell.ret;
      m.repeat = cell.repeat;
      m.paths = sweep.paths_per_cell;
      try {
        ddp::GuidanceSpec spec = base;
        spec.target_return = cell.ret;
        ddp::InpaintSpec inpaint{sweep.start, sweep.goal, cell.repeat};
        const ddp::SampleBatch batch =
            ddp::sample_paths(model, world, sweep.paths_per_cell, cell.horizon, spec, &inpaint,
                              ddp::mix_seed(seed, ci));
        int free_count = 0;
        for (const auto& p : batch.paths) {
          if (p.collisions == 0) ++free_count;
          m.mean_min_clearance += p.min_clearance;
          m.mean_goal_gap += p.goal_gap;
          m.mean_dense_return += p.dense_return;
        }
        const double n = static_cast<double>(batch.paths.size());
        m.collision_free = free_count / n;
        m.mean_min_clearance /= n;
        m.mean_goal_gap /= n;
        m.mean_dense_return /= n;
        batches[ci] = batch;
      } catch (const std::exception& e) {
        m.error_code = error_code_of(e);
        m.error = e.what();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(args.jobs, static_cast<int>(cells.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::string csv =
      "horizon,target_return,repeat_goal,paths,collision_free_fraction,mean_min_clearance,"
      "mean_goal_gap,mean_dense_return\n";
  int failed = 0;
  int first_error = 0;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    CellMetrics& m = metrics[ci];
    if (m.error_code != 0) {
      ++failed;
      if (first_error == 0) first_error = m.error_code;
      std::cerr << "cell h" << m.horizon << " r" << ddp::format_double(m.target_return) << " i"
                << m.repeat << " failed: " << m.error << "\n";
      continue;
    }
    const std::string tag = "h" + std::to_string(m.horizon) + "_r" +
                            ddp::format_double(m.target_return) + "_i" +
                            std::to_string(m.repeat);
    m.csv_path = args.out + "/batch_" + tag + ".csv";
    write_batch_csv(m.csv_path, batches[ci], model.cfg.dims);
    {
      ordered_json diag;
      diag["horizon"] = m.horizon;
      diag["target_return"] = m.target_return;
      diag["repeat_goal"] = m.repeat;
      diag["selected"] = batches[ci].selected;
      ordered_json per_path = ordered_json::array();
      for (const auto& p : batches[ci].paths) {
        ordered_json jp;
        jp["dense_return"] = p.dense_return;
        jp["selection_cost"] = p.selection_cost;
        jp["collisions"] = p.collisions;
        jp["min_clearance"] = p.min_clearance;
        jp["goal_gap"] = p.goal_gap;
        per_path.push_back(jp);
      }
      diag["paths"] = per_path;
      ddp::write_file_text(args.out + "/batch_" + tag + ".json", diag.dump(2) + "\n");
    }
    std::vector<Eigen::MatrixXd> paths;
    for (const auto& p : batches[ci].paths) paths.push_back(p.coords);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(paths[0].rows(), paths[0].cols());
    for (const auto& p : paths) mean += p;
    mean /= static_cast<double>(paths.size());
    paths.push_back(mean);
    m.svg_path = args.out + "/batch_" + tag + ".svg";
    ddp::write_file_text(m.svg_path,
                         ddp::render_paths_svg(world, paths, static_cast<int>(paths.size()) - 1));
    csv += std::to_string(m.horizon) + "," + ddp::format_double(m.target_return) + "," +
           std::to_string(m.repeat) + "," + std::to_string(m.paths) + "," +
           ddp::format_double(m.collision_free) + "," +
           ddp::format_double(m.mean_min_clearance) + "," +
           ddp::format_double(m.mean_goal_gap) + "," +
           ddp::format_double(m.mean_dense_return) + "\n";
  }
  const std::string csv_path = args.out + "/sweep.csv";
  ddp::write_file_text(csv_path, csv);

  ordered_json out;
  out["command"] = "sweep";
  out["cells"] = cells.size();
  out["failed_cells"] = failed;
  out["paths_per_cell"] = sweep.paths_per_cell;
  out["seed"] = seed;
  out["csv"] = csv_path;
  emit(out);
  return first_error;
}

// ---- plan ----

ordered_json trace_json(const ddp::ExecutionTrace& trace, const ddp::PlanSection& ps,
                        ddp::CoordMode mode, std::uint64_t seed) {
  ordered_json jt;
  jt["seed"] = seed;
  jt["reached"] = trace.reached;
  jt["replans"] = trace.replans;
  jt["final_gap"] = trace.final_gap;
  jt["final_rot_gap"] = trace.final_rot_gap;
  jt["collisions"] = trace.collisions;
  jt["delta"] = ps.plan.delta;
  jt["start"] = pose_json(ps.start, mode);
  jt["goal"] = pose_json(ps.goal, mode);
  jt["selected"] = trace.selected;
  ordered_json steps = ordered_json::array();
  for (const auto& s : trace.steps) steps.push_back(pose_json(s.pose, mode));
  jt["executed"] = steps;
  return jt;
}

int cmd_plan(const CommonArgs& args, const std::string& checkpoint_path, int seeds) {
  const auto root = ddp::load_config_file(args.config);
  const std::uint64_t seed = resolve_seed(args, root);
  if (checkpoint_path.empty()) throw ddp::ConfigError("plan: --checkpoint is required");
  if (seeds < 1) throw ddp::ConfigError("plan: --seeds must be >= 1");

  const ddp::Model model = ddp::load_checkpoint(checkpoint_path);
  const ddp::World world = ddp::world_from_config(root, args.world);
  ddp::PlanSection ps = ddp::plan_section(root);
  ps.plan.guidance = ddp::sample_section(root);
  ddp::check_strategy_compatibility(ps.plan.guidance, model);
  ddp::ensure_directory(args.out);

  const ddp::CoordMode mode = model.mode();
  std::vector<ddp::ExecutionTrace> traces;
  std::vector<std::string> trace_paths;
  for (int t = 0; t < seeds; ++t) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(t);
    traces.push_back(ddp::plan_path(model, world, ps.start, ps.goal, ps.plan, s));
    const std::string tp =
        seeds == 1 ? args.out + "/trace.json" : args.out + "/trace_" + std::to_string(t) + ".json";
    ddp::write_file_text(tp, trace_json(traces.back(), ps, mode, s).dump(2) + "\n");
    trace_paths.push_back(tp);
    std::cerr << "seed " << s << (traces.back().reached ? " reached" : " not reached") << " gap "
              << ddp::format_double(traces.back().final_gap) << " replans "
              << traces.back().replans << "\n";
  }

  std::string csv = model.cfg.dims == 3 ? "path_index,waypoint_index,x,y,z\n"
                                        : "path_index,waypoint_index,x,y,z,rx,ry,rz\n";
  std::vector<Eigen::MatrixXd> executed;
  for (int t = 0; t < seeds; ++t) {
    const auto& steps = traces[static_cast<std::size_t>(t)].steps;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(steps.size()), 3);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      m.row(static_cast<Eigen::Index>(i)) = steps[i].pose.position.transpose();
      const Eigen::VectorXd row = ddp::pose_row(steps[i].pose, mode);
      csv += std::to_string(t) + "," + std::to_string(i);
      for (Eigen::Index d = 0; d < row.size(); ++d) csv += "," + ddp::format_double(row[d]);
      csv += "\n";
    }
    executed.push_back(std::move(m));
  }
  const std::string csv_path = args.out + "/path.csv";
  ddp::write_file_text(csv_path, csv);
  const std::string svg_path = args.out + "/plan.svg";
  ddp::write_file_text(svg_path, ddp::render_paths_svg(world, executed, seeds == 1 ? 0 : -1));

  int successes = 0;
  double mean_gap = 0.0, mean_replans = 0.0;
  for (const auto& t : traces) {
    if (t.reached && t.collisions == 0) ++successes;
    mean_gap += t.final_gap;
    mean_replans += t.replans;
  }

  ordered_json out;
  out["command"] = "plan";
  out["seeds"] = seeds;
  out["successes"] = successes;
  out["success_rate"] = static_cast<double>(successes) / static_cast<double>(seeds);
  out["mean_final_gap"] = mean_gap / static_cast<double>(seeds);
  out["mean_replans"] = mean_replans / static_cast<double>(seeds);
  if (seeds == 1) {
    out["reached"] = traces[0].reached;
    out["replans"] = traces[0].replans;
    out["final_gap"] = traces[0].final_gap;
    out["collisions"] = traces[0].collisions;
    out["executed_steps"] = traces[0].steps.size();
  }
  out["seed"] = seed;
  out["trace"] = trace_paths.front();
  out["path_csv"] = csv_path;
  out["svg"] = svg_path;
  emit(out);
  return 0;
}

// ---- eval ----

int cmd_eval(const CommonArgs& args, const std::string& batch_path, const std::string& trace_path,
             std::vector<double> goal, int repeat, double delta) {
  const auto root = ddp::load_config_file(args.config);
  if (batch_path.empty() == trace_path.empty())
    throw ddp::ConfigError("eval: pass exactly one of --batch or --trace");

  ordered_json out;
  out["command"] = "eval";
  if (!trace_path.empty()) {
    nlohmann::json jt;
    try {
      jt = nlohmann::json::parse(ddp::read_file_text(trace_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw ddp::FormatError(trace_path + ": invalid trace JSON: " + e.what());
    }
    const bool reached = jt.at("reached").get<bool>();
    const int collisions = jt.at("collisions").get<int>();
    out["reached"] = reached;
    out["final_gap"] = jt.at("final_gap").get<double>();
    out["collisions"] = collisions;
    out["replans"] = jt.at("replans").get<int>();
    out["success"] = reached && collisions == 0;
    emit(out);
    return 0;
  }

  const ddp::World world = ddp::world_from_config(root, args.world);
  const std::vector<Eigen::MatrixXd> paths = read_batch_csv(batch_path);
  if (paths.empty()) throw ddp::FormatError(batch_path + ": no paths");
  int free_count = 0, success_count = 0;
  std::int64_t hit_waypoints = 0, total_waypoints = 0;
  double mean_clear = 0.0, mean_gap = 0.0, mean_len = 0.0;
  const bool have_gap = goal.size() == 3;
  for (const auto& m : paths) {
    double min_d = std::numeric_limits<double>::infinity();
    bool hit = false;
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
      const double d = world.signed_distance(m.row(t).head<3>().transpose());
      min_d = std::min(min_d, d);
      if (d <= 0.0) {
        hit = true;
        ++hit_waypoints;
      }
      if (t > 0) mean_len += (m.row(t).head<3>() - m.row(t - 1).head<3>()).norm();
    }
    total_waypoints += m.rows();
    if (!hit) ++free_count;
    mean_clear += min_d;
    if (have_gap) {
      const Eigen::Index free_end = m.rows() - 1 - repeat;
      if (free_end < 0) throw ddp::ConfigError("eval: --repeat exceeds the path length");
      const double gap = (m.row(free_end).head<3>().transpose() -
                          Eigen::Vector3d(goal[0], goal[1], goal[2]))
                             .norm();
      mean_gap += gap;
      if (!hit && gap <= delta) ++success_count;
    }
  }
  const double n = static_cast<double>(paths.size());
  out["paths"] = paths.size();
  out["collision_rate"] =
      static_cast<double>(hit_waypoints) / static_cast<double>(total_waypoints);
  out["collision_free_fraction"] = free_count / n;
  out["mean_min_clearance"] = mean_clear / n;
  out["mean_path_length"] = mean_len / n;
  if (have_gap) {
    out["mean_goal_gap"] = mean_gap / n;
    out["delta"] = delta;
    out["success_rate"] = success_count / n;
  }
  emit(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"denoising-diffusion trajectory generation and planning"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, sweep_args, plan_args, eval_args;
  std::string dataset_path, resume_path, sweep_ckpt, plan_ckpt;
  std::string eval_batch, eval_trace;
  std::vector<double> eval_goal;
  int eval_repeat = 1;
  int gen_count = 0, gen_waypoints = 0, plan_seeds = 1;
  double eval_delta = 0.05;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a straight-line trajectory corpus");
  add_common(gen, gen_args);
  gen->add_option("--count", gen_count, "number of paths (overrides config)");
  gen->add_option("--waypoints", gen_waypoints, "waypoints per path (overrides config)");

  CLI::App* train = app.add_subcommand("train", "train the noise-prediction model");
  add_common(train, train_args);
  train->add_option("--dataset", dataset_path, "dataset file (.ddpt)");
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  CLI::App* sweep = app.add_subcommand("sweep", "open-loop sampling grid");
  add_common(sweep, sweep_args);
  sweep->add_option("--checkpoint", sweep_ckpt, "model checkpoint (.ddpc)");

  CLI::App* plan = app.add_subcommand("plan", "receding-horizon planning");
  add_common(plan, plan_args);
  plan->add_option("--checkpoint", plan_ckpt, "model checkpoint (.ddpc)");
  plan->add_option("--seeds", plan_seeds, "number of repeated trials (seed, seed+1, ...)");

  CLI::App* eval = app.add_subcommand("eval", "metrics for saved batches or traces");
  add_common(eval, eval_args);
  eval->add_option("--batch", eval_batch, "batch CSV to score");
  eval->add_option("--trace", eval_trace, "execution trace JSON to score");
  eval->add_option("--goal", eval_goal, "goal position x y z for gap metrics")->expected(3);
  eval->add_option("--repeat", eval_repeat, "inpainted goal rows in the batch");
  eval->add_option("--delta", eval_delta, "success threshold on the goal gap in meters");

  gen->add_option("--world", gen_args.world, "world JSON file (overrides config)");
  train->add_option("--world", train_args.world, "unused; accepted for symmetry");
  sweep->add_option("--world", sweep_args.world, "world JSON file (overrides config)");
  plan->add_option("--world", plan_args.world, "world JSON file (overrides config)");
  eval->add_option("--world", eval_args.world, "world JSON file (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args, gen_count, gen_waypoints);
    if (train->parsed()) return cmd_train(train_args, dataset_path, resume_path);
    if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_ckpt);
    if (plan->parsed()) return cmd_plan(plan_args, plan_ckpt, plan_seeds);
    if (eval->parsed())
      return cmd_eval(eval_args, eval_batch, eval_trace, eval_goal, eval_repeat, eval_delta);
  } catch (const ddp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ddp::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const ddp::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const ddp::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

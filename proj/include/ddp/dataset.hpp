#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <json.hpp>
#include <string>
#include <vector>

#include "ddp/environment.hpp"
#include "ddp/errors.hpp"
#include "ddp/geometry.hpp"
#include "ddp/io.hpp"
#include "ddp/rng.hpp"

namespace ddp {

enum class RewardKind { kDense, kSparse };

inline std::string reward_kind_name(RewardKind k) {
  return k == RewardKind::kDense ? "dense" : "sparse";
}

inline RewardKind reward_kind_from_name(const std::string& s) {
  if (s == "dense") return RewardKind::kDense;
  if (s == "sparse") return RewardKind::kSparse;
  throw ConfigError("unknown reward kind '" + s + "', expected dense or sparse");
}

struct RewardParams {
  RewardKind kind = RewardKind::kDense;
  double a = 46.0;      // clearance sharpness of the dense reward
  double gamma = 0.99;  // discount
};

/// Per-waypoint reward. Dense: -1 in collision, else -exp(-a d) so the
/// penalty decays with clearance d. Sparse: -1 in collision, else 0.
inline double step_reward(const World& world, const Eigen::Vector3d& p,
                          const RewardParams& params) {
  const double d = world.signed_distance(p);
  if (d <= 0.0) return -1.0;
  if (params.kind == RewardKind::kSparse) return 0.0;
  return -std::exp(-params.a * d);
}

/// Discounted return over waypoint positions: sum_t gamma^t r_t.
inline double discounted_return(const World& world, const Eigen::MatrixXd& positions,
                                const RewardParams& params) {
  double c = 0.0;
  double g = 1.0;
  for (Eigen::Index t = 0; t < positions.rows(); ++t) {
    c += g * step_reward(world, positions.row(t).head<3>().transpose(), params);
    g *= params.gamma;
  }
  return c;
}

/// Per-dimension affine normalization. The transform runs in double; stored
/// stats invert it exactly up to roundoff.
struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
  }

  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& x) const {
    return (x.array().rowwise() * std.transpose().array()).matrix().rowwise() + mean.transpose();
  }

  Eigen::VectorXd normalize_row(const Eigen::VectorXd& x) const {
    return (x - mean).cwiseQuotient(std);
  }

  Eigen::VectorXd denormalize_row(const Eigen::VectorXd& x) const {
    return x.cwiseProduct(std) + mean;
  }
};

/// Straight-line trajectory corpus with discounted returns. The payload is
/// kept as raw float32 in file order (path-major, then waypoint-major) so
/// that save/load round trips are bit-exact.
struct Dataset {
  int num_paths = 0;
  int waypoints = 0;
  int dims = 3;
  RewardParams reward;
  World world;
  bool normalized = false;
  NormStats norm;  // valid only when normalized
  std::vector<float> data;
  std::vector<float> returns;

  using RowMajorMapF =
      Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  RowMajorMapF path(int p) const {
    return RowMajorMapF(data.data() + static_cast<std::ptrdiff_t>(p) * waypoints * dims,
                        waypoints, dims);
  }

  /// Path p as a double matrix (waypoints x dims).
  Eigen::MatrixXd path_d(int p) const { return path(p).cast<double>(); }

  void check_index(int p) const {
    if (p < 0 || p >= num_paths)
      throw ConfigError("dataset: path index " + std::to_string(p) + " outside [0, " +
                        std::to_string(num_paths) + ")");
  }

  double returns_min() const {
    return static_cast<double>(*std::min_element(returns.begin(), returns.end()));
  }

  double returns_max() const {
    return static_cast<double>(*std::max_element(returns.begin(), returns.end()));
  }
};

/// Samples `count` straight-line paths between uniform start/goal poses in
/// the world bounds and scores each with the discounted return. Starts and
/// goals may fall inside obstacles on purpose: those paths carry the low
/// returns the conditioning signal is trained on. Path p draws from the
/// sub-stream (seed, p), so the corpus is independent of generation order.
inline Dataset generate_dataset(const World& world, int count, int waypoints, CoordMode mode,
                                const RewardParams& reward, std::uint64_t seed) {
  if (count < 1) throw ConfigError("dataset: count must be >= 1");
  if (waypoints < 2) throw ConfigError("dataset: waypoints must be >= 2");
  for (int i = 0; i < 3; ++i)
    if (!(world.bounds.half_extents[i] > 0.0))
      throw ConfigError("dataset: workspace bounds have zero extent on axis " +
                        std::to_string(i));
  Dataset ds;
  ds.num_paths = count;
  ds.waypoints = waypoints;
  ds.dims = coord_dims(mode);
  ds.reward = reward;
  ds.world = world;
  ds.data.resize(static_cast<std::size_t>(count) * waypoints * ds.dims);
  ds.returns.resize(static_cast<std::size_t>(count));

  const Eigen::Vector3d lo = world.bounds.center - world.bounds.half_extents;
  const Eigen::Vector3d hi = world.bounds.center + world.bounds.half_extents;
  for (int p = 0; p < count; ++p) {
    Rng rng = Rng::derived(seed, static_cast<std::uint64_t>(p));
    Pose start;
    Pose goal;
    for (int i = 0; i < 3; ++i) start.position[i] = rng.uniform(lo[i], hi[i]);
    if (mode == CoordMode::kFullPose) start.orientation = random_unit_quaternion(rng);
    for (int i = 0; i < 3; ++i) goal.position[i] = rng.uniform(lo[i], hi[i]);
    if (mode == CoordMode::kFullPose) goal.orientation = random_unit_quaternion(rng);

    float* row = ds.data.data() + static_cast<std::ptrdiff_t>(p) * waypoints * ds.dims;
    for (int t = 0; t < waypoints; ++t) {
      const double u = static_cast<double>(t) / (waypoints - 1);
      const Pose pose = interpolate(start, goal, u);
      const Eigen::VectorXd coords = pose_row(pose, mode);
      for (int d = 0; d < ds.dims; ++d) row[t * ds.dims + d] = static_cast<float>(coords[d]);
    }
    // The return is scored on the stored float32 coordinates so that a
    // reloaded dataset reproduces it exactly.
    ds.returns[static_cast<std::size_t>(p)] =
        static_cast<float>(discounted_return(world, ds.path_d(p), reward));
  }
  return ds;
}

/// Computes per-dimension stats over every waypoint and rescales the payload
/// in place to zero mean, unit variance. Population variance, double
/// accumulation.
inline void normalize_dataset(Dataset& ds) {
  if (ds.normalized) throw ConfigError("dataset: already normalized");
  const std::size_t rows = static_cast<std::size_t>(ds.num_paths) * ds.waypoints;
  if (rows == 0) throw ConfigError("dataset: empty");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(ds.dims);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int d = 0; d < ds.dims; ++d)
      mean[d] += static_cast<double>(ds.data[r * static_cast<std::size_t>(ds.dims) +
                                             static_cast<std::size_t>(d)]);
  }
  mean /= static_cast<double>(rows);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(ds.dims);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int d = 0; d < ds.dims; ++d) {
      const double dv = static_cast<double>(ds.data[r * static_cast<std::size_t>(ds.dims) +
                                                    static_cast<std::size_t>(d)]) -
                        mean[d];
      var[d] += dv * dv;
    }
  }
  var /= static_cast<double>(rows);
  for (int d = 0; d < ds.dims; ++d) {
    if (!(var[d] > 1e-18))
      throw ConfigError("dataset: dimension " + std::to_string(d) +
                        " has (near-)zero variance, cannot normalize");
  }
  ds.norm.mean = mean;
  ds.norm.std = var.cwiseSqrt();
  for (std::size_t r = 0; r < rows; ++r) {
    for (int d = 0; d < ds.dims; ++d) {
      auto& v = ds.data[r * static_cast<std::size_t>(ds.dims) + static_cast<std::size_t>(d)];
      v = static_cast<float>((static_cast<double>(v) - mean[d]) / ds.norm.std[d]);
    }
  }
  ds.normalized = true;
}

namespace detail {

inline nlohmann::json vecxd_to_json(const Eigen::VectorXd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

inline Eigen::VectorXd vecxd_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where + ": expected numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

}  // namespace detail

inline nlohmann::json reward_to_json(const RewardParams& r) {
  nlohmann::json j;
  j["kind"] = reward_kind_name(r.kind);
  j["a"] = r.a;
  j["gamma"] = r.gamma;
  return j;
}

inline RewardParams reward_from_json(const nlohmann::json& j, const std::string& where) {
  detail::check_keys(j, {"kind", "a", "gamma"}, where);
  RewardParams r;
  if (j.contains("kind")) r.kind = reward_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("a")) r.a = j.at("a").get<double>();
  if (j.contains("gamma")) r.gamma = j.at("gamma").get<double>();
  if (!(r.a > 0.0)) throw ConfigError(where + ": a must be positive");
  if (!(r.gamma > 0.0 && r.gamma <= 1.0)) throw ConfigError(where + ": gamma must be in (0, 1]");
  return r;
}

inline constexpr char kDatasetMagic[9] = "DDPTRAJ1";

/// Serializes: magic, u64 header length, UTF-8 JSON header, float32 payload
/// (paths, then per-path returns).
inline void save_dataset(const Dataset& ds, const std::string& path) {
  nlohmann::json h;
  h["num_paths"] = ds.num_paths;
  h["waypoints_per_path"] = ds.waypoints;
  h["dims"] = ds.dims;
  h["reward"] = reward_to_json(ds.reward);
  h["normalized"] = ds.normalized;
  if (ds.normalized) {
    h["normalization"] = {{"mean", detail::vecxd_to_json(ds.norm.mean)},
                          {"std", detail::vecxd_to_json(ds.norm.std)}};
  }
  h["world"] = world_to_json(ds.world);
  const std::string header = h.dump();

  ByteWriter w;
  w.bytes(kDatasetMagic, 8);
  w.u64(header.size());
  w.text(header);
  w.f32_array(ds.data.data(), ds.data.size());
  w.f32_array(ds.returns.data(), ds.returns.size());
  write_file_bytes(path, w.buffer());
}

inline Dataset load_dataset(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, path);
  r.expect_magic(kDatasetMagic);
  const std::uint64_t hlen = r.u64();
  const std::string htext = r.text(hlen);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": header is not valid JSON: " + e.what());
  }
  detail::check_keys(h,
                     {"num_paths", "waypoints_per_path", "dims", "reward", "normalized",
                      "normalization", "world"},
                     "dataset header");
  Dataset ds;
  ds.num_paths = h.at("num_paths").get<int>();
  ds.waypoints = h.at("waypoints_per_path").get<int>();
  ds.dims = h.at("dims").get<int>();
  if (ds.num_paths < 1 || ds.waypoints < 2 || (ds.dims != 3 && ds.dims != 6))
    throw FormatError(path + ": invalid dataset geometry in header");
  ds.reward = reward_from_json(h.at("reward"), "dataset header.reward");
  ds.world = world_from_json(h.at("world"));
  ds.normalized = h.at("normalized").get<bool>();
  if (ds.normalized) {
    const auto& n = h.at("normalization");
    detail::check_keys(n, {"mean", "std"}, "dataset header.normalization");
    ds.norm.mean = detail::vecxd_from_json(n.at("mean"), "normalization.mean");
    ds.norm.std = detail::vecxd_from_json(n.at("std"), "normalization.std");
    if (ds.norm.mean.size() != ds.dims || ds.norm.std.size() != ds.dims)
      throw FormatError(path + ": normalization stats do not match dims");
  }
  const std::size_t coords =
      static_cast<std::size_t>(ds.num_paths) * static_cast<std::size_t>(ds.waypoints) *
      static_cast<std::size_t>(ds.dims);
  const std::size_t expected = 4 * (coords + static_cast<std::size_t>(ds.num_paths));
  if (r.remaining() < expected)
    throw TruncatedFileError(path + ": payload has " + std::to_string(r.remaining()) +
                             " bytes, header implies " + std::to_string(expected));
  if (r.remaining() > expected)
    throw PayloadSizeError(path + ": payload has " + std::to_string(r.remaining()) +
                           " bytes, header implies " + std::to_string(expected));
  ds.data.resize(coords);
  r.f32_array(ds.data.data(), coords);
  ds.returns.resize(static_cast<std::size_t>(ds.num_paths));
  r.f32_array(ds.returns.data(), ds.returns.size());
  return ds;
}

}  // namespace ddp

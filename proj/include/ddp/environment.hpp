#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <string>
#include <vector>

#include "ddp/errors.hpp"

namespace ddp {

/// Axis-aligned box.
struct Box {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extents = Eigen::Vector3d::Ones();
};

/// Exact signed distance to an axis-aligned box: negative inside, zero on
/// the surface, positive outside.
inline double box_signed_distance(const Eigen::Vector3d& p, const Box& box) {
  const Eigen::Vector3d q = (p - box.center).cwiseAbs() - box.half_extents;
  const Eigen::Vector3d outside = q.cwiseMax(0.0);
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside.norm() + inside;
}

/// Gradient of box_signed_distance. At non-differentiable points (corner
/// diagonals inside, surface crossings) a deterministic subgradient is
/// returned: ties resolve to the lowest axis index and sign(0) counts as
/// positive.
inline Eigen::Vector3d box_distance_gradient(const Eigen::Vector3d& p, const Box& box) {
  const Eigen::Vector3d rel = p - box.center;
  const Eigen::Vector3d q = rel.cwiseAbs() - box.half_extents;
  const Eigen::Vector3d outside = q.cwiseMax(0.0);
  const double out_norm = outside.norm();
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
  if (out_norm > 0.0) {
    for (int i = 0; i < 3; ++i) {
      if (q[i] > 0.0) grad[i] = (rel[i] >= 0.0 ? 1.0 : -1.0) * q[i] / out_norm;
    }
    return grad;
  }
  int axis = 0;
  for (int i = 1; i < 3; ++i) {
    if (q[i] > q[axis]) axis = i;
  }
  grad[axis] = rel[axis] >= 0.0 ? 1.0 : -1.0;
  return grad;
}

/// Workspace bounds plus box obstacles. Distances are to the nearest
/// obstacle; the bounds box only delimits the sampling region.
struct World {
  Box bounds;
  std::vector<Box> obstacles;

  /// Signed distance to the nearest obstacle, +infinity with no obstacles.
  double signed_distance(const Eigen::Vector3d& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (const Box& b : obstacles) d = std::min(d, box_signed_distance(p, b));
    return d;
  }

  /// Gradient of signed_distance: the gradient of the box attaining the
  /// minimum, lowest index on ties.
  Eigen::Vector3d distance_gradient(const Eigen::Vector3d& p) const {
    double best = std::numeric_limits<double>::infinity();
    int best_i = -1;
    for (int i = 0; i < static_cast<int>(obstacles.size()); ++i) {
      const double d = box_signed_distance(p, obstacles[static_cast<std::size_t>(i)]);
      if (d < best) {
        best = d;
        best_i = i;
      }
    }
    if (best_i < 0) return Eigen::Vector3d::Zero();
    return box_distance_gradient(p, obstacles[static_cast<std::size_t>(best_i)]);
  }

  bool in_collision(const Eigen::Vector3d& p) const { return signed_distance(p) <= 0.0; }

  bool inside_bounds(const Eigen::Vector3d& p) const {
    return ((p - bounds.center).cwiseAbs().array() <= bounds.half_extents.array()).all();
  }

  /// Longest diagonal of the bounds box.
  double diagonal() const { return 2.0 * bounds.half_extents.norm(); }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

inline Eigen::Vector3d vec3_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(where + ": expected an array of 3 numbers");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number())
      throw ConfigError(where + ": expected an array of 3 numbers");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

inline nlohmann::json vec3_to_json(const Eigen::Vector3d& v) {
  return nlohmann::json::array({v.x(), v.y(), v.z()});
}

}  // namespace detail

inline Box box_from_json(const nlohmann::json& j, const std::string& where) {
  detail::check_keys(j, {"center", "half_extents"}, where);
  if (!j.contains("center") || !j.contains("half_extents"))
    throw ConfigError(where + ": needs 'center' and 'half_extents'");
  Box b;
  b.center = detail::vec3_from_json(j.at("center"), where + ".center");
  b.half_extents = detail::vec3_from_json(j.at("half_extents"), where + ".half_extents");
  if (!(b.half_extents.array() > 0.0).all() || !b.half_extents.allFinite() ||
      !b.center.allFinite())
    throw ConfigError(where + ": half_extents must be finite and strictly positive");
  return b;
}

inline nlohmann::json box_to_json(const Box& b) {
  nlohmann::json j;
  j["center"] = detail::vec3_to_json(b.center);
  j["half_extents"] = detail::vec3_to_json(b.half_extents);
  return j;
}

inline World world_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"bounds", "obstacles"}, "world");
  if (!j.contains("bounds")) throw ConfigError("world: missing 'bounds'");
  World w;
  w.bounds = box_from_json(j.at("bounds"), "world.bounds");
  if (j.contains("obstacles")) {
    if (!j.at("obstacles").is_array()) throw ConfigError("world.obstacles: expected an array");
    int i = 0;
    for (const auto& jb : j.at("obstacles")) {
      w.obstacles.push_back(box_from_json(jb, "world.obstacles[" + std::to_string(i) + "]"));
      ++i;
    }
  }
  return w;
}

inline nlohmann::json world_to_json(const World& w) {
  nlohmann::json j;
  j["bounds"] = box_to_json(w.bounds);
  j["obstacles"] = nlohmann::json::array();
  for (const Box& b : w.obstacles) j["obstacles"].push_back(box_to_json(b));
  return j;
}

}  // namespace ddp

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <json.hpp>
#include <string>

#include "ddp/dataset.hpp"
#include "ddp/denoiser.hpp"
#include "ddp/errors.hpp"
#include "ddp/io.hpp"
#include "ddp/schedule.hpp"

namespace ddp {

/// Affine map from raw discounted returns to the [0, 1] conditioning range,
/// clamped at the ends. Degenerate ranges (all returns equal) map to 0.5.
struct ReturnScale {
  double min = -1.0;
  double max = 0.0;

  double scale(double c) const {
    if (max - min < 1e-12) return 0.5;
    return std::clamp((c - min) / (max - min), 0.0, 1.0);
  }
};

/// Everything needed to run the reverse process: architecture, weights,
/// schedule, the dataset normalization, and the return scaling the
/// conditioning was trained with.
struct Model {
  DenoiserConfig cfg;
  Denoiser<float> net;
  Eigen::VectorXf params;
  NoiseSchedule sched;
  NormStats norm;
  ReturnScale rscale;
  RewardParams reward;
  int train_step = 0;
  bool ema = false;

  Model(const DenoiserConfig& c, const NoiseSchedule& s) : cfg(c), net(c), sched(s) {}

  CoordMode mode() const { return cfg.dims == 3 ? CoordMode::kPosition : CoordMode::kFullPose; }
};

inline constexpr char kCheckpointMagic[9] = "DDPCKPT1";

inline nlohmann::json denoiser_config_to_json(const DenoiserConfig& c) {
  nlohmann::json j;
  j["arch"] = arch_name(c.arch);
  j["dims"] = c.dims;
  j["horizon"] = c.horizon;
  j["widths"] = c.widths;
  j["step_embed"] = c.step_embed;
  j["cond_embed"] = c.cond_embed;
  j["kernel"] = c.kernel;
  j["groups"] = c.groups;
  return j;
}

/// Reads the architecture fields out of a (larger) header object; key
/// strictness is the caller's job.
inline DenoiserConfig denoiser_config_from_json(const nlohmann::json& j, const std::string&) {
  DenoiserConfig c;
  if (j.contains("arch")) c.arch = arch_from_name(j.at("arch").get<std::string>());
  if (j.contains("dims")) c.dims = j.at("dims").get<int>();
  if (j.contains("horizon")) c.horizon = j.at("horizon").get<int>();
  if (j.contains("widths")) c.widths = j.at("widths").get<std::vector<int>>();
  if (j.contains("step_embed")) c.step_embed = j.at("step_embed").get<int>();
  if (j.contains("cond_embed")) c.cond_embed = j.at("cond_embed").get<int>();
  if (j.contains("kernel")) c.kernel = j.at("kernel").get<int>();
  if (j.contains("groups")) c.groups = j.at("groups").get<int>();
  c.validate();
  return c;
}

/// Serializes: magic, u64 header length, JSON header, float32 parameters.
inline void save_checkpoint(const Model& m, const std::string& path) {
  nlohmann::json h = denoiser_config_to_json(m.cfg);
  h["schedule"] = {{"K", m.sched.K}, {"s", m.sched.s}};
  h["normalization"] = {{"mean", detail::vecxd_to_json(m.norm.mean)},
                        {"std", detail::vecxd_to_json(m.norm.std)}};
  h["return_scale"] = {{"min", m.rscale.min}, {"max", m.rscale.max}};
  h["reward"] = reward_to_json(m.reward);
  h["train_step"] = m.train_step;
  h["ema"] = m.ema;
  h["param_count"] = static_cast<std::int64_t>(m.net.param_count());
  const std::string header = h.dump();

  ByteWriter w;
  w.bytes(kCheckpointMagic, 8);
  w.u64(header.size());
  w.text(header);
  w.f32_array(m.params.data(), static_cast<std::size_t>(m.params.size()));
  write_file_bytes(path, w.buffer());
}

inline Model load_checkpoint(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, path);
  r.expect_magic(kCheckpointMagic);
  const std::uint64_t hlen = r.u64();
  const std::string htext = r.text(hlen);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": header is not valid JSON: " + e.what());
  }
  detail::check_keys(h,
                     {"arch", "dims", "horizon", "widths", "step_embed", "cond_embed", "kernel",
                      "groups", "schedule", "normalization", "return_scale", "reward",
                      "train_step", "ema", "param_count"},
                     "checkpoint header");
  DenoiserConfig cfg;
  try {
    cfg = denoiser_config_from_json(h, "checkpoint header");
  } catch (const ConfigError& e) {
    throw FormatError(path + ": invalid architecture in header: " + e.what());
  }
  const auto& js = h.at("schedule");
  detail::check_keys(js, {"K", "s"}, "checkpoint header.schedule");
  const int K = js.at("K").get<int>();
  if (K < 1) throw FormatError(path + ": invalid schedule length");
  Model m(cfg, NoiseSchedule::cosine(K, js.at("s").get<double>()));

  const auto& jn = h.at("normalization");
  detail::check_keys(jn, {"mean", "std"}, "checkpoint header.normalization");
  m.norm.mean = detail::vecxd_from_json(jn.at("mean"), "checkpoint normalization.mean");
  m.norm.std = detail::vecxd_from_json(jn.at("std"), "checkpoint normalization.std");
  if (m.norm.mean.size() != cfg.dims || m.norm.std.size() != cfg.dims)
    throw FormatError(path + ": normalization stats do not match dims");

  const auto& jr = h.at("return_scale");
  detail::check_keys(jr, {"min", "max"}, "checkpoint header.return_scale");
  m.rscale.min = jr.at("min").get<double>();
  m.rscale.max = jr.at("max").get<double>();
  m.reward = reward_from_json(h.at("reward"), "checkpoint header.reward");
  m.train_step = h.at("train_step").get<int>();
  m.ema = h.at("ema").get<bool>();

  const std::int64_t declared = h.at("param_count").get<std::int64_t>();
  if (declared != static_cast<std::int64_t>(m.net.param_count()))
    throw FormatError(path + ": header declares " + std::to_string(declared) +
                      " parameters, architecture has " + std::to_string(m.net.param_count()));
  const std::size_t expected = 4 * static_cast<std::size_t>(declared);
  if (r.remaining() < expected)
    throw TruncatedFileError(path + ": parameter payload has " + std::to_string(r.remaining()) +
                             " bytes, expected " + std::to_string(expected));
  if (r.remaining() > expected)
    throw PayloadSizeError(path + ": parameter payload has " + std::to_string(r.remaining()) +
                           " bytes, expected " + std::to_string(expected));
  m.params.resize(static_cast<Eigen::Index>(declared));
  r.f32_array(m.params.data(), static_cast<std::size_t>(declared));
  return m;
}

}  // namespace ddp

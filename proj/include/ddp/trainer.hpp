#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "ddp/checkpoint.hpp"
#include "ddp/dataset.hpp"
#include "ddp/denoiser.hpp"
#include "ddp/errors.hpp"
#include "ddp/rng.hpp"
#include "ddp/schedule.hpp"

namespace ddp {

struct TrainConfig {
  int steps = 20000;
  int batch = 32;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double drop_prob = 0.25;  // probability of training an example unconditionally
  int log_interval = 100;
  int checkpoint_interval = 0;  // 0: no intermediate checkpoints
  bool ema = false;
  double ema_decay = 0.995;

  void validate() const {
    if (steps < 1) throw ConfigError("train: steps must be >= 1");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("train: adam betas must be in [0, 1)");
    if (!(drop_prob >= 0.0 && drop_prob <= 1.0))
      throw ConfigError("train: drop_prob must be in [0, 1]");
    if (log_interval < 1) throw ConfigError("train: log_interval must be >= 1");
    if (checkpoint_interval < 0) throw ConfigError("train: checkpoint_interval must be >= 0");
    if (!(ema_decay > 0.0 && ema_decay < 1.0))
      throw ConfigError("train: ema_decay must be in (0, 1)");
  }
};

/// First-moment/second-moment adaptive step with bias correction.
template <typename S>
class Adam {
public:
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

  Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(Vec::Zero(n)), v_(Vec::Zero(n)) {}

  void step(Vec& params, const Vec& grad) {
    ++t_;
    m_ = static_cast<S>(b1_) * m_ + static_cast<S>(1.0 - b1_) * grad;
    v_ = static_cast<S>(b2_) * v_ +
         static_cast<S>(1.0 - b2_) * grad.cwiseProduct(grad);
    const double corr = lr_ * std::sqrt(1.0 - std::pow(b2_, t_)) / (1.0 - std::pow(b1_, t_));
    params -= static_cast<S>(corr) *
              (m_.array() / (v_.array().sqrt() + static_cast<S>(eps_))).matrix();
  }

  int steps_taken() const { return t_; }

private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  Vec m_, v_;
};

/// ema <- decay * ema + (1 - decay) * params. Decay 0 copies, decay 1 freezes.
template <typename S>
inline void ema_update(Eigen::Matrix<S, Eigen::Dynamic, 1>& ema,
                       const Eigen::Matrix<S, Eigen::Dynamic, 1>& params, double decay) {
  if (ema.size() != params.size())
    throw ConfigError("ema: shadow has " + std::to_string(ema.size()) +
                      " entries, parameters have " + std::to_string(params.size()));
  ema = static_cast<S>(decay) * ema + static_cast<S>(1.0 - decay) * params;
}

struct TrainResult {
  float final_loss = 0.0f;
  std::vector<std::pair<int, float>> loss_log;  // (step, loss) at log_interval multiples
};

/// Noise-prediction training loop: per example a uniform diffusion step, a
/// fresh noise draw, and a drop_prob chance of the null condition. The whole
/// loop runs on one RNG stream, so equal seeds give bit-identical weights.
/// Non-finite losses abort. `checkpoint_cb`, when set, fires at
/// checkpoint_interval multiples with the current weights installed in `m`.
inline TrainResult train_model(
    Model& m, const Dataset& ds, const TrainConfig& cfg, std::uint64_t seed,
    const std::function<void(int, const Model&)>& checkpoint_cb = nullptr,
    const std::function<void(int, float)>& progress_cb = nullptr) {
  cfg.validate();
  if (!ds.normalized) throw ConfigError("train: dataset must be normalized");
  if (ds.dims != m.cfg.dims) throw ConfigError("train: dataset dims do not match the model");
  if (m.cfg.arch == ArchKind::kResidualMlp && ds.waypoints != m.cfg.horizon)
    throw ConfigError("train: residual-mlp horizon does not match the dataset");

  using Net = Denoiser<float>;
  const Net& net = m.net;
  if (m.params.size() != net.param_count())
    throw ConfigError("train: parameter vector does not match the architecture");

  Rng rng = Rng::derived(seed, 2);  // training stream
  Adam<float> opt(net.param_count(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  Eigen::VectorXf grad(net.param_count());
  Eigen::VectorXf shadow;
  if (cfg.ema) shadow = m.params;

  typename Net::Workspace ws;
  std::vector<typename Net::Prepared> batch(static_cast<std::size_t>(cfg.batch));
  TrainResult result;

  for (int step = 1; step <= cfg.steps; ++step) {
    for (int b = 0; b < cfg.batch; ++b) {
      const int idx = static_cast<int>(rng.uniform_int(0, ds.num_paths - 1));
      const int k = static_cast<int>(rng.uniform_int(1, m.sched.K));
      const bool drop = rng.uniform() < cfg.drop_prob;
      Eigen::MatrixXd noise(ds.waypoints, ds.dims);
      for (Eigen::Index t = 0; t < noise.rows(); ++t)
        for (Eigen::Index d = 0; d < noise.cols(); ++d) noise(t, d) = rng.normal();
      const Eigen::MatrixXd x0 = ds.path_d(idx);
      auto& ex = batch[static_cast<std::size_t>(b)];
      ex.x = m.sched.forward_sample(x0, k, noise).cast<float>();
      ex.k = k;
      ex.cond = drop ? Condition::null()
                     : Condition::returns(m.rscale.scale(
                           static_cast<double>(ds.returns[static_cast<std::size_t>(idx)])));
      ex.target = noise.cast<float>();
    }
    const float loss = net.loss_and_gradient(m.params, batch, grad, ws);
    if (!std::isfinite(loss))
      throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                         " (parameter norm " + std::to_string(m.params.norm()) + ")");
    opt.step(m.params, grad);
    if (cfg.ema) ema_update(shadow, m.params, cfg.ema_decay);

    result.final_loss = loss;
    if (step % cfg.log_interval == 0) {
      result.loss_log.emplace_back(step, loss);
      if (progress_cb) progress_cb(step, loss);
    }
    if (checkpoint_cb && cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 &&
        step < cfg.steps) {
      m.train_step = step;
      if (cfg.ema) {
        Eigen::VectorXf raw = m.params;
        m.params = shadow;
        checkpoint_cb(step, m);
        m.params = raw;
      } else {
        checkpoint_cb(step, m);
      }
    }
  }
  m.train_step = cfg.steps;
  m.ema = cfg.ema;
  if (cfg.ema) m.params = shadow;
  return result;
}

/// Builds an untrained model from a normalized dataset: fresh fan-in weights
/// plus the dataset's normalization, return range, and reward parameters.
inline Model make_model(const DenoiserConfig& dcfg, const NoiseSchedule& sched,
                        const Dataset& ds, std::uint64_t seed) {
  if (!ds.normalized) throw ConfigError("model: dataset must be normalized");
  if (ds.dims != dcfg.dims) throw ConfigError("model: dataset dims do not match the config");
  Model m(dcfg, sched);
  Rng rng = Rng::derived(seed, 1);  // init stream
  m.net.init_params(m.params, rng);
  m.norm = ds.norm;
  m.rscale.min = ds.returns_min();
  m.rscale.max = ds.returns_max();
  m.reward = ds.reward;
  return m;
}

}  // namespace ddp

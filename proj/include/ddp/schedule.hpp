#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "ddp/errors.hpp"

namespace ddp {

/// Discrete-time noise schedule over diffusion steps k = 1..K, cosine
/// variant. Arrays are indexed by k; index 0 holds the k = 0 boundary values
/// (alpha_bar[0] = 1) so the closed forms below read like the math.
///
/// alpha_bar is stored as the running product of the clipped (1 - beta)
/// terms, which keeps the product identity exact even where the 0.999 beta
/// cap bites near k = K.
struct NoiseSchedule {
  int K = 0;
  double s = 0.008;
  Eigen::VectorXd beta;        // beta[k], k in [1, K]
  Eigen::VectorXd alpha;       // 1 - beta[k]
  Eigen::VectorXd alpha_bar;   // prod_{j<=k} alpha[j], alpha_bar[0] = 1
  Eigen::VectorXd beta_tilde;  // posterior variance, beta_tilde[1] = 0
  Eigen::VectorXd sigma;       // sqrt(beta_tilde)

  static NoiseSchedule cosine(int steps, double s_offset = 0.008) {
    if (steps < 1) throw ConfigError("schedule: K must be >= 1");
    NoiseSchedule sched;
    sched.K = steps;
    sched.s = s_offset;
    const int K = steps;
    auto f = [&](double k) {
      const double v = std::cos((k / K + s_offset) / (1.0 + s_offset) * M_PI / 2.0);
      return v * v;
    };
    const double f0 = f(0.0);
    sched.beta.resize(K + 1);
    sched.alpha.resize(K + 1);
    sched.alpha_bar.resize(K + 1);
    sched.beta_tilde.resize(K + 1);
    sched.sigma.resize(K + 1);
    sched.beta[0] = 0.0;
    sched.alpha[0] = 1.0;
    sched.alpha_bar[0] = 1.0;
    sched.beta_tilde[0] = 0.0;
    sched.sigma[0] = 0.0;
    double prev_raw = 1.0;
    for (int k = 1; k <= K; ++k) {
      const double raw = f(static_cast<double>(k)) / f0;
      sched.beta[k] = std::min(1.0 - raw / prev_raw, 0.999);
      prev_raw = raw;
      sched.alpha[k] = 1.0 - sched.beta[k];
      sched.alpha_bar[k] = sched.alpha_bar[k - 1] * sched.alpha[k];
      sched.beta_tilde[k] =
          (1.0 - sched.alpha_bar[k - 1]) / (1.0 - sched.alpha_bar[k]) * sched.beta[k];
      sched.sigma[k] = std::sqrt(sched.beta_tilde[k]);
    }
    return sched;
  }

  void check_step(int k) const {
    if (k < 1 || k > K)
      throw ConfigError("schedule: step " + std::to_string(k) + " outside [1, " +
                        std::to_string(K) + "]");
  }

  /// Closed-form forward sample: sqrt(abar_k) x0 + sqrt(1 - abar_k) noise.
  Eigen::MatrixXd forward_sample(const Eigen::MatrixXd& x0, int k,
                                 const Eigen::MatrixXd& noise) const {
    check_step(k);
    return std::sqrt(alpha_bar[k]) * x0 + std::sqrt(1.0 - alpha_bar[k]) * noise;
  }

  /// Mean of q(x^{k-1} | x^k, x^0). Its variance is beta_tilde[k].
  Eigen::MatrixXd posterior_mean(const Eigen::MatrixXd& xk, const Eigen::MatrixXd& x0,
                                 int k) const {
    check_step(k);
    const double c0 = std::sqrt(alpha_bar[k - 1]) * beta[k] / (1.0 - alpha_bar[k]);
    const double ck = std::sqrt(alpha[k]) * (1.0 - alpha_bar[k - 1]) / (1.0 - alpha_bar[k]);
    return c0 * x0 + ck * xk;
  }

  /// Inverts the forward closed form for the clean signal given predicted
  /// noise: (x^k - sqrt(1 - abar_k) eps) / sqrt(abar_k).
  Eigen::MatrixXd x0_from_noise(const Eigen::MatrixXd& xk, int k,
                                const Eigen::MatrixXd& eps) const {
    check_step(k);
    return (xk - std::sqrt(1.0 - alpha_bar[k]) * eps) / std::sqrt(alpha_bar[k]);
  }
};

}  // namespace ddp

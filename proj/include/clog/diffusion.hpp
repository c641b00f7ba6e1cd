// Copyright 2026 The clog-bench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CLOG_DIFFUSION_HPP
#define CLOG_DIFFUSION_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "clog/errors.hpp"
#include "clog/rng.hpp"

namespace clog {

/// Variance schedule of the forward noising process. Step indices are
/// 1-based: beta(1)..beta(T).
struct NoiseSchedule {
  Eigen::VectorXd betas;
  Eigen::VectorXd alphas;      // 1 - beta
  Eigen::VectorXd alpha_bars;  // running product of alphas
  Eigen::VectorXd sigmas;      // reverse-step noise scale

  int T() const { return static_cast<int>(betas.size()); }
  double beta(int t) const { return betas(t - 1); }
  double alpha(int t) const { return alphas(t - 1); }
  /// alpha_bar(0) = 1 by convention.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars(t - 1); }
  double sigma(int t) const { return sigmas(t - 1); }

  void validate() const;

  /// sigma_t = sqrt(beta_t) (the isotropic default).
  static NoiseSchedule from_betas(Eigen::VectorXd betas);
  /// Linear beta ramp; the common default is T=1000, 1e-4 .. 0.02.
  static NoiseSchedule linear(int T, double beta_start = 1e-4,
                              double beta_end = 0.02);
  /// Variant carrying the posterior variance
  /// sigma_t^2 = beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t); with
  /// these sigmas the stochastic accelerated sampler at full length matches
  /// the ancestral chain's per-step marginals.
  static NoiseSchedule linear_posterior_sigma(int T, double beta_start = 1e-4,
                                              double beta_end = 0.02);
};

/// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
template <class D1, class D2>
Eigen::MatrixXd forward_noise(const Eigen::MatrixBase<D1>& x0, int t,
                              const Eigen::MatrixBase<D2>& eps,
                              const NoiseSchedule& schedule) {
  require(t >= 1 && t <= schedule.T(), "diffusion step t out of range");
  check_invariant(x0.rows() == eps.rows() && x0.cols() == eps.cols(),
                  "forward_noise shape mismatch");
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

/// One ancestral reverse step:
/// x_{t-1} = (x_t - (beta_t / sqrt(1 - alpha_bar_t)) * eps_pred) / sqrt(alpha_t)
///           + sigma_t * z.
/// Callers pass z = 0 at t = 1.
template <class D1, class D2, class D3>
Eigen::MatrixXd ddpm_sample_step(const Eigen::MatrixBase<D1>& x_t, int t,
                                 const Eigen::MatrixBase<D2>& eps_pred,
                                 const NoiseSchedule& schedule,
                                 const Eigen::MatrixBase<D3>& z) {
  require(t >= 1 && t <= schedule.T(), "diffusion step t out of range");
  const double coeff =
      schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
  return (x_t - coeff * eps_pred) / std::sqrt(schedule.alpha(t)) +
         schedule.sigma(t) * z;
}

/// Noise predictor eps(x_t, t); the whole batch shares one t.
using EpsPredictor =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, int)>;

/// Fills a matrix with standard normal draws, column by column.
Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Full ancestral chain from pure noise; final output clipped to [-1, 1].
Eigen::MatrixXd ddpm_sample_chain(const EpsPredictor& eps,
                                  const NoiseSchedule& schedule,
                                  Eigen::Index pixels, Eigen::Index n,
                                  Rng& rng);

/// Accelerated sampler over an evenly strided sub-schedule of n_steps.
/// eta = 0 is fully deterministic given the initial noise draw; the final
/// output is clipped to [-1, 1].
Eigen::MatrixXd ddim_sample(const EpsPredictor& eps,
                            const NoiseSchedule& schedule, Eigen::Index pixels,
                            Eigen::Index n, int n_steps, double eta, Rng& rng);

}  // namespace clog

#endif  // CLOG_DIFFUSION_HPP

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

#include "clog/diffusion.hpp"

#include <algorithm>

namespace clog {

void NoiseSchedule::validate() const {
  check_invariant(betas.size() > 0, "empty noise schedule");
  check_invariant(alphas.size() == betas.size() &&
                      alpha_bars.size() == betas.size() &&
                      sigmas.size() == betas.size(),
                  "noise schedule field length mismatch");
  double prod = 1.0;
  for (int t = 1; t <= T(); ++t) {
    check_invariant(beta(t) > 0.0 && beta(t) < 1.0,
                    "beta_t must lie in (0, 1)");
    check_invariant(alpha(t) == 1.0 - beta(t), "alpha_t != 1 - beta_t");
    prod *= alpha(t);
    check_invariant(std::abs(alpha_bar(t) - prod) <= 1e-12 * prod,
                    "alpha_bar inconsistent with product of alphas");
    check_invariant(alpha_bar(t) < alpha_bar(t - 1),
                    "alpha_bar must be strictly decreasing");
  }
}

NoiseSchedule NoiseSchedule::from_betas(Eigen::VectorXd betas_in) {
  NoiseSchedule s;
  s.betas = std::move(betas_in);
  const Eigen::Index T = s.betas.size();
  s.alphas = 1.0 - s.betas.array();
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    prod *= s.alphas(t);
    s.alpha_bars(t) = prod;
  }
  s.sigmas = s.betas.array().sqrt();
  s.validate();
  return s;
}

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  require(T >= 1, "schedule length must be positive");
  Eigen::VectorXd betas(T);
  if (T == 1) {
    betas(0) = beta_start;
  } else {
    for (int t = 0; t < T; ++t) {
      betas(t) = beta_start +
                 (beta_end - beta_start) * static_cast<double>(t) /
                     static_cast<double>(T - 1);
    }
  }
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::linear_posterior_sigma(int T, double beta_start,
                                                    double beta_end) {
  NoiseSchedule s = linear(T, beta_start, beta_end);
  for (int t = 1; t <= s.T(); ++t) {
    const double var = s.beta(t) * (1.0 - s.alpha_bar(t - 1)) /
                       (1.0 - s.alpha_bar(t));
    s.sigmas(t - 1) = std::sqrt(var);
  }
  return s;
}

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  }
  return m;
}

Eigen::MatrixXd ddpm_sample_chain(const EpsPredictor& eps,
                                  const NoiseSchedule& schedule,
                                  Eigen::Index pixels, Eigen::Index n,
                                  Rng& rng) {
  Eigen::MatrixXd x = normal_matrix(pixels, n, rng);
  for (int t = schedule.T(); t >= 1; --t) {
    const Eigen::MatrixXd pred = eps(x, t);
    const Eigen::MatrixXd z = t > 1 ? normal_matrix(pixels, n, rng)
                                    : Eigen::MatrixXd::Zero(pixels, n);
    x = ddpm_sample_step(x, t, pred, schedule, z);
  }
  return x.cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::MatrixXd ddim_sample(const EpsPredictor& eps,
                            const NoiseSchedule& schedule, Eigen::Index pixels,
                            Eigen::Index n, int n_steps, double eta,
                            Rng& rng) {
  require(n_steps >= 1, "sampler step count must be positive");
  require(n_steps <= schedule.T(),
          "sampler step count exceeds schedule length");
  require(eta >= 0.0 && eta <= 1.0, "eta must lie in [0, 1]");
  // Evenly strided sub-schedule tau_i = i*T/n_steps; tau_{n_steps} = T.
  std::vector<int> taus(static_cast<std::size_t>(n_steps));
  for (int i = 1; i <= n_steps; ++i) {
    taus[static_cast<std::size_t>(i - 1)] =
        static_cast<int>((static_cast<long long>(i) * schedule.T()) / n_steps);
  }
  Eigen::MatrixXd x = normal_matrix(pixels, n, rng);
  for (int i = n_steps; i >= 1; --i) {
    const int t = taus[static_cast<std::size_t>(i - 1)];
    const int t_prev = i > 1 ? taus[static_cast<std::size_t>(i - 2)] : 0;
    const double ab = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar(t_prev);
    const Eigen::MatrixXd pred = eps(x, t);
    const Eigen::MatrixXd x0_hat =
        (x - std::sqrt(1.0 - ab) * pred) / std::sqrt(ab);
    const double sigma =
        eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) *
        std::sqrt(1.0 - ab / ab_prev);
    const double dir_coeff =
        std::sqrt(std::max(1.0 - ab_prev - sigma * sigma, 0.0));
    x = std::sqrt(ab_prev) * x0_hat + dir_coeff * pred;
    if (sigma > 0.0) x += sigma * normal_matrix(pixels, n, rng);
  }
  return x.cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace clog

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

#ifndef CLOG_STRATEGIES_HPP
#define CLOG_STRATEGIES_HPP

#include <Eigen/Dense>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "clog/backbone.hpp"
#include "clog/dataset.hpp"
#include "clog/domain.hpp"
#include "clog/errors.hpp"
#include "clog/rng.hpp"

namespace clog {

/// lambda * sum_k (theta_k - theta*_k)^2.
template <class D1, class D2>
double l2_penalty(const Eigen::MatrixBase<D1>& params,
                  const Eigen::MatrixBase<D2>& reference, double lambda) {
  require(params.size() == reference.size(),
          "l2_penalty length mismatch between params and reference");
  return lambda * (params - reference).squaredNorm();
}

/// lambda * sum_k w_k (theta_k - theta*_k)^2 for non-negative weights w
/// (Fisher diagonal or any importance vector).
template <class D1, class D2, class D3>
double weighted_quadratic_penalty(const Eigen::MatrixBase<D1>& params,
                                  const Eigen::MatrixBase<D2>& reference,
                                  const Eigen::MatrixBase<D3>& weights,
                                  double lambda) {
  require(params.size() == reference.size() &&
              params.size() == weights.size(),
          "weighted penalty length mismatch");
  return lambda *
         (weights.array() * (params - reference).array().square()).sum();
}

template <class D1, class D2, class D3>
double ewc_penalty(const Eigen::MatrixBase<D1>& params,
                   const Eigen::MatrixBase<D2>& reference,
                   const Eigen::MatrixBase<D3>& fisher, double lambda) {
  return weighted_quadratic_penalty(params, reference, fisher, lambda);
}

/// Adds the gradient of weighted_quadratic_penalty, 2 lambda w (theta -
/// theta*), into grad.
template <class D1, class D2, class D3>
void add_weighted_quadratic_grad(const Eigen::MatrixBase<D1>& params,
                                 const Eigen::MatrixBase<D2>& reference,
                                 const Eigen::MatrixBase<D3>& weights,
                                 double lambda, Eigen::VectorXd& grad) {
  require(params.size() == reference.size() &&
              params.size() == weights.size() && params.size() == grad.size(),
          "weighted penalty gradient length mismatch");
  grad.array() +=
      2.0 * lambda * weights.array() * (params - reference).array();
}

/// Path-integral accumulator: omega_k -= g_k * delta_k for one optimizer step
/// (g is the applied gradient, delta the resulting parameter change).
template <class D1, class D2>
void si_accumulate(Eigen::VectorXd& omega, const Eigen::MatrixBase<D1>& grad,
                   const Eigen::MatrixBase<D2>& param_delta) {
  require(omega.size() == grad.size() && omega.size() == param_delta.size(),
          "si_accumulate length mismatch");
  omega.array() -= grad.array() * param_delta.array();
}

/// End-of-task consolidation: Omega_k += omega_k / (delta_k^2 + xi), then
/// omega resets to zero.
template <class D>
void si_consolidate(Eigen::VectorXd& omega,
                    const Eigen::MatrixBase<D>& task_param_delta, double xi,
                    Eigen::VectorXd& importance) {
  require(omega.size() == task_param_delta.size() &&
              omega.size() == importance.size(),
          "si_consolidate length mismatch");
  require(xi > 0.0, "si damping must be positive");
  importance.array() +=
      omega.array() / (task_param_delta.array().square() + xi);
  omega.setZero();
}

/// Projects g away from conflicting with g_ref: when <g, g_ref> < 0 returns
/// g - (<g,g_ref>/<g_ref,g_ref>) g_ref, otherwise g unchanged. A zero g_ref
/// leaves g unchanged.
Eigen::VectorXd agem_project(const Eigen::VectorXd& g,
                             const Eigen::VectorXd& g_ref);

class ReplayBuffer;

/// Continual-learning strategy: a set of lifecycle hooks around a backbone's
/// training loop. The base class implements every hook as a no-op, which is
/// exactly naive continual learning. Strategies draw randomness only from
/// their private stream, never from the training stream, so a neutralized
/// strategy (zero weight, zero replay) is bit-identical to ncl.
class Strategy {
 public:
  Strategy(std::string id, std::uint64_t seed);
  virtual ~Strategy();

  const std::string& id() const { return id_; }

  virtual void on_task_start(int task_index, GenerativeBackbone& backbone,
                             const TaskData& data);
  /// Returns the batch actually trained on; may mix in replay samples.
  virtual Batch compose_batch(int task_index, const Batch& current);
  /// Adds the parameter-space penalty gradient into grad (full length) and
  /// returns the penalty value. Called once per optimizer phase per step.
  virtual double penalty_and_grad(const GenerativeBackbone& backbone,
                                  Eigen::VectorXd& grad);
  /// May rewrite the flat gradient of (base + auxiliary) loss before the
  /// optimizer consumes it.
  virtual void transform_gradient(int task_index, GenerativeBackbone& backbone,
                                  int phase, const Batch& batch,
                                  Eigen::VectorXd& grad);
  /// True when the strategy needs after_update records; lets the training
  /// loop skip per-step parameter snapshots otherwise.
  virtual bool tracks_parameter_path() const;
  /// Observes a completed optimizer step (path-integral bookkeeping).
  virtual void after_update(int task_index, GenerativeBackbone& backbone,
                            const Eigen::VectorXd& applied_grad,
                            const Eigen::VectorXd& params_before);
  virtual void on_task_end(int task_index, GenerativeBackbone& backbone,
                           const TaskData& data);
  /// Model evaluated for reference task task_index; nullptr means the live
  /// backbone. Throws for tasks the strategy has not trained yet.
  virtual const GenerativeBackbone* select_model(int task_index) const;

  /// Frozen teacher for output distillation, nullptr when inactive.
  virtual const GenerativeBackbone* distill_teacher(int task_index) const;
  virtual double distill_weight() const;

  /// When true the strategy performs the parameter update itself and
  /// apply_update replaces backbone.apply_gradient.
  virtual bool owns_update(int task_index) const;
  virtual void apply_update(int task_index, GenerativeBackbone& backbone,
                            int phase, const Eigen::VectorXd& grad);

  /// Parameters held in strategy-owned snapshots (memory accounting).
  virtual Eigen::Index stored_param_count() const;

  /// Task-boundary checkpoint payload (strategy-specific state + rng).
  virtual void save_state(std::ostream& out) const;
  virtual void load_state(std::istream& in,
                          const GenerativeBackbone& prototype);

 protected:
  std::string id_;
  Rng rng_;
};

/// Builds the strategy named by config.strategy_id with hyperparameters from
/// config.strategy_hyperparams. Unknown ids are a configuration error.
std::unique_ptr<Strategy> make_strategy(const RunConfig& config,
                                        std::uint64_t strategy_seed);

/// Number of data batches averaged when estimating Fisher / importance
/// vectors at a task boundary.
constexpr int kImportanceBatches = 8;

/// Diagonal empirical Fisher estimate averaged over n_batches random batches
/// of the given task's data (all optimizer phases summed).
Eigen::VectorXd estimate_fisher(GenerativeBackbone& backbone,
                                const TaskData& data, int n_batches,
                                int batch_size, Rng& rng);

/// Mean absolute gradient of the squared output norm, averaged over
/// n_batches random batches (generator pathway for adversarial backbones).
Eigen::VectorXd estimate_output_importance(GenerativeBackbone& backbone,
                                           const TaskData& data, int n_batches,
                                           int batch_size, Rng& rng);

/// Draws a batch of the task's data uniformly with replacement.
Batch draw_batch(const TaskData& data, int batch_size, Rng& rng);

}  // namespace clog

#endif  // CLOG_STRATEGIES_HPP

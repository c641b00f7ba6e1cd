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

#ifndef CLOG_RUNNER_HPP
#define CLOG_RUNNER_HPP

#include <functional>
#include <string>
#include <vector>

#include "clog/backbone.hpp"
#include "clog/cl_metrics.hpp"
#include "clog/config.hpp"
#include "clog/dataset.hpp"
#include "clog/domain.hpp"
#include "clog/fid.hpp"
#include "clog/strategies.hpp"

namespace clog {

/// Evaluation knobs that are not part of the experiment definition (they do
/// not enter the run id).
struct EvalOptions {
  int n_gen = 500;         // generated samples per quality() call
  int max_reference = 1000;  // reference images embedded per task
  int sample_chunk = 32;   // generation/embedding chunk size
};

/// One benchmark invocation: config plus orchestration extras.
struct ExperimentPlan {
  RunConfig config;
  std::vector<double> grid;  // explicit search grid, empty = default 8 values
  std::string output_dir = "results";
  std::string data_root;     // empty: $CLOG_DATA_ROOT, else ./data
  std::string resume_token;  // run id of an interrupted run
  EvalOptions eval;
  int stop_after_tasks = -1;  // > 0: checkpoint and stop early (testing)
};

/// FID of n_gen samples conditioned uniformly over the task's classes against
/// precomputed reference features. Non-finite generator output yields NaN
/// (recorded as NA by callers).
double quality(const GenerativeBackbone& model, const TaskSpec& task,
               const Eigen::MatrixXd& reference_features, int n_gen,
               const FeatureExtractor& extractor, int sampler_steps, Rng& rng,
               int sample_chunk = 32);

/// Current-task quality probe evaluated on checkpoint cadence;
/// injectable so the checkpoint-restore logic is testable with synthetic
/// traces. Lower values are better.
using QualityProbe = std::function<double(const GenerativeBackbone&, int step)>;

struct TaskTrainResult {
  int best_step = 0;
  double best_quality = 0.0;
  bool has_best = false;
  bool diverged = false;
};

/// Runs config.train_steps_per_task optimizer steps with the strategy's hooks
/// in order: compose_batch, base + penalty loss, transform_gradient, update.
/// Evaluates `probe` every config.eval_interval_steps steps (and at the final
/// step) and restores the best-scoring checkpoint (parameters + optimizer
/// state) before returning. Non-finite gradients stop the task early and mark
/// it diverged.
TaskTrainResult train_task(GenerativeBackbone& backbone, Strategy& strategy,
                           int task_index, const TaskData& data,
                           const RunConfig& config, Rng& train_rng,
                           const QualityProbe& probe);

struct SequenceResult {
  MetricMatrix matrix;
  std::vector<int> best_steps;       // per task
  std::vector<double> task_seconds;  // per task wall time
  std::vector<char> diverged;        // per task
  std::vector<long long> stored_params;  // live + strategy snapshots, per task
};

/// Full class-incremental pass over one class order: trains tasks 1..T,
/// filling metric-matrix row t after task t. Past tasks' raw data is sealed
/// after their boundary; only replay buffers and reference features persist.
/// The pooled upper-bound strategy instead trains once on all data and fills
/// every row from the final model.
SequenceResult run_sequence(const RunConfig& config, const ClassOrder& order,
                            const LabeledDataset& dataset,
                            const EvalOptions& eval);

/// The 8-value hyperparameter search grid spanning 1e-3..1e4.
const std::vector<double>& default_search_grid();

/// Hyperparameter key tuned by grid search for the given strategy
/// ("lambda" for the quadratic penalties, "kd_weight" for distillation);
/// other strategies have nothing to search and raise a ConfigError.
std::string grid_target_key(const std::string& strategy_id);

struct GridResult {
  std::string target_key;
  double chosen = 0.0;
  std::vector<double> values;  // ascending
  std::vector<double> afqs;    // NaN where the run produced NA
};

/// Trains the full sequence on class order 1 for each grid value and picks
/// the value with the best (direction-aware) AFQ; ties go to the smaller
/// value. All-NA grids are a configuration error.
GridResult grid_search(const ExperimentPlan& plan);

struct ResultBundle {
  std::string run_id;
  std::string bundle_dir;
  std::vector<int> completed_order_ids;
  std::vector<EvalReport> per_order;
  AggregateReport aggregate;
  bool complete = false;
};

/// Deterministic run identifier derived from the canonical config encoding.
std::string compute_run_id(const RunConfig& config);

/// Executes run_sequence per configured class order, aggregates, and persists
/// <output_dir>/<run_id>/{config.json, matrix_order<k>.json, report.json,
/// curves.csv, summary.csv, timing.csv}. Honors plan.resume_token (continue
/// from the task-boundary checkpoint) and plan.stop_after_tasks (write a
/// checkpoint and return an incomplete bundle).
ResultBundle run_benchmark(const ExperimentPlan& plan);

/// Regenerates report artifacts from a persisted bundle. format: "csv"
/// rewrites curves.csv/summary.csv; "plot" additionally renders curves.svg.
void emit_report(const std::string& bundle_dir, const std::string& format);

/// Order-independent hash of bundle contents; wall-clock artifacts
/// (timing.csv) and checkpoints are excluded so reruns compare equal.
std::string bundle_content_hash(const std::string& bundle_dir);

}  // namespace clog

#endif  // CLOG_RUNNER_HPP

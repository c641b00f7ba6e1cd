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

#include "clog/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "clog/hashing.hpp"
#include "clog/nn/params.hpp"

namespace fs = std::filesystem;

namespace clog {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr char kMetricId[] = "fid";
constexpr char kCheckpointMagic[] = "CLOGCKPT1";

// Seed-stream tags; every consumer of randomness gets its own derived stream
// so optional strategy machinery can never perturb the training stream.
enum StreamTag : std::uint64_t {
  kStreamInit = 1,
  kStreamTrain = 2,
  kStreamStrategy = 3,
  kStreamRowEval = 4,
  kStreamProbeEval = 5,
};

double seconds_since(
    const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

ClassOrderBook load_order_book(const std::string& data_root) {
  const fs::path fixture = fs::path(data_root) / "class_orders.json";
  if (fs::exists(fixture)) return ClassOrderBook::load(fixture.string());
  return ClassOrderBook::builtin();
}

nlohmann::json stat_to_json(const MetricStat& stat) {
  return nlohmann::json{{"mean", stat.mean}, {"std", stat.stddev}};
}

double json_number(const nlohmann::json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot open file for writing: " + path.string());
  out << text;
  require(out.good(), "failed writing file: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

/// Per-order class-incremental training state; unit granularity matches the
/// resume checkpoints (one task, or the whole pooled run for the pooled
/// upper bound).
class SequenceRunner {
 public:
  SequenceRunner(const RunConfig& config, const ClassOrder& order,
                 const LabeledDataset& dataset, const EvalOptions& eval)
      : config_(config),
        order_(order),
        eval_(eval),
        pooled_(config.strategy_id == "noncl"),
        extractor_(FeatureExtractor::standard(dataset.shape.channels)),
        sequence_(build_task_sequence(order, config.classes_per_task,
                                      dataset.dataset_id)),
        matrix_(sequence_.num_tasks(), MetricDirection::kLowerBetter,
                kMetricId, extractor_.extractor_id()) {
    tasks_ = partition_by_task(dataset, sequence_);
    const int T = sequence_.num_tasks();
    refs_.resize(static_cast<std::size_t>(T));
    best_steps_.assign(static_cast<std::size_t>(T), 0);
    task_seconds_.assign(static_cast<std::size_t>(T), 0.0);
    diverged_.assign(static_cast<std::size_t>(T), 0);
    stored_params_.assign(static_cast<std::size_t>(T), 0);

    const int num_classes = static_cast<int>(dataset.class_set().size());
    Rng init_rng(derive_seed(config.seed, kStreamInit,
                             static_cast<std::uint64_t>(order.order_id)));
    BackboneOptions options;
    backbone_ = make_backbone(config.backbone_kind, dataset.shape, num_classes,
                              options, init_rng);
    strategy_ = make_strategy(
        config, derive_seed(config.seed, kStreamStrategy,
                            static_cast<std::uint64_t>(order.order_id)));
    train_rng_ = Rng(derive_seed(config.seed, kStreamTrain,
                                 static_cast<std::uint64_t>(order.order_id)));
  }

  int total_units() const { return pooled_ ? 1 : sequence_.num_tasks(); }
  bool done() const { return next_unit_ > total_units(); }

  void run_one_unit() {
    check_invariant(!done(), "run_one_unit called on a finished sequence");
    if (pooled_) {
      run_pooled();
    } else {
      run_task(next_unit_);
    }
    ++next_unit_;
  }

  SequenceResult take_result() {
    check_invariant(done(), "sequence result taken before completion");
    SequenceResult result{std::move(matrix_), std::move(best_steps_),
                          std::move(task_seconds_), std::move(diverged_),
                          std::move(stored_params_)};
    return result;
  }

  void save(std::ostream& out) const {
    nn::write_i64(out, next_unit_);
    nn::write_rng(out, train_rng_);
    backbone_->save_state(out);
    strategy_->save_state(out);
    const int rows = completed_rows();
    nn::write_i64(out, rows);
    for (int t = 1; t <= rows; ++t) {
      for (int i = 1; i <= t; ++i) {
        nn::write_i64(out, matrix_.is_na(t, i) ? 1 : 0);
        nn::write_f64(out, matrix_.is_na(t, i) ? 0.0 : matrix_.at(t, i));
      }
    }
    const int T = sequence_.num_tasks();
    for (int t = 0; t < T; ++t) {
      nn::write_i64(out, best_steps_[static_cast<std::size_t>(t)]);
      nn::write_f64(out, task_seconds_[static_cast<std::size_t>(t)]);
      nn::write_i64(out, diverged_[static_cast<std::size_t>(t)]);
      nn::write_i64(out, stored_params_[static_cast<std::size_t>(t)]);
    }
  }

  void load(std::istream& in) {
    next_unit_ = static_cast<int>(nn::read_i64(in));
    train_rng_ = nn::read_rng(in);
    backbone_->load_state(in);
    strategy_->load_state(in, *backbone_);
    const int rows = static_cast<int>(nn::read_i64(in));
    for (int t = 1; t <= rows; ++t) {
      for (int i = 1; i <= t; ++i) {
        const bool na = nn::read_i64(in) != 0;
        const double value = nn::read_f64(in);
        if (na) {
          matrix_.set_na(t, i);
        } else {
          matrix_.set(t, i, value);
        }
      }
    }
    const int T = sequence_.num_tasks();
    for (int t = 0; t < T; ++t) {
      best_steps_[static_cast<std::size_t>(t)] =
          static_cast<int>(nn::read_i64(in));
      task_seconds_[static_cast<std::size_t>(t)] = nn::read_f64(in);
      diverged_[static_cast<std::size_t>(t)] =
          static_cast<char>(nn::read_i64(in));
      stored_params_[static_cast<std::size_t>(t)] = nn::read_i64(in);
    }
    // Reference features for finished tasks are still needed by future rows;
    // rebuild them before sealing the raw data again.
    if (!pooled_) {
      for (int i = 1; i < next_unit_; ++i) {
        ensure_reference(i);
        tasks_[static_cast<std::size_t>(i - 1)].seal();
      }
    } else if (next_unit_ > 1) {
      for (int i = 1; i <= sequence_.num_tasks(); ++i) ensure_reference(i);
    }
  }

 private:
  int completed_rows() const {
    if (!pooled_) return next_unit_ - 1;
    return next_unit_ > 1 ? sequence_.num_tasks() : 0;
  }

  void ensure_reference(int task_index) {
    Eigen::MatrixXd& ref = refs_[static_cast<std::size_t>(task_index - 1)];
    if (ref.rows() > 0) return;
    const TaskData& data = tasks_[static_cast<std::size_t>(task_index - 1)];
    const Eigen::Index n =
        std::min<Eigen::Index>(eval_.max_reference, data.sample_count());
    require(n >= 2, "task has too few samples for a metric reference");
    ref.resize(n, FeatureExtractor::kFeatureDim);
    for (Eigen::Index start = 0; start < n; start += eval_.sample_chunk) {
      const Eigen::Index m = std::min<Eigen::Index>(eval_.sample_chunk,
                                                    n - start);
      const Eigen::MatrixXd chunk =
          data.images().middleCols(start, m).cast<double>();
      ref.middleRows(start, m) = extractor_.embed(chunk, data.shape());
    }
  }

  double evaluate_row_cell(const GenerativeBackbone& model, int ref_task) {
    Rng rng(derive_seed(config_.seed, kStreamRowEval,
                        static_cast<std::uint64_t>(order_.order_id),
                        static_cast<std::uint64_t>(ref_task)));
    return quality(model,
                   sequence_.tasks[static_cast<std::size_t>(ref_task - 1)],
                   refs_[static_cast<std::size_t>(ref_task - 1)], eval_.n_gen,
                   extractor_, config_.sampler_steps, rng, eval_.sample_chunk);
  }

  void run_task(int t) {
    const auto start = std::chrono::steady_clock::now();
    TaskData& data = tasks_[static_cast<std::size_t>(t - 1)];
    ensure_reference(t);
    strategy_->on_task_start(t, *backbone_, data);
    const TaskTrainResult trained = train_task(
        *backbone_, *strategy_, t, data, config_, train_rng_,
        make_probe(t, sequence_.tasks[static_cast<std::size_t>(t - 1)],
                   refs_[static_cast<std::size_t>(t - 1)]));
    strategy_->on_task_end(t, *backbone_, data);
    data.seal();
    for (int i = 1; i <= t; ++i) {
      const GenerativeBackbone* view = strategy_->select_model(i);
      if (view == nullptr) view = backbone_.get();
      const double q = evaluate_row_cell(*view, i);
      if (std::isnan(q)) {
        matrix_.set_na(t, i);
      } else {
        matrix_.set(t, i, q);
      }
    }
    record_unit(t, trained, start);
  }

  void run_pooled() {
    const auto start = std::chrono::steady_clock::now();
    const int T = sequence_.num_tasks();
    for (int i = 1; i <= T; ++i) ensure_reference(i);
    TaskData pooled = pool_task_data(tasks_);
    Eigen::MatrixXd pooled_ref = pooled_reference(pooled);
    RunConfig budget = config_;
    // Same optimizer-step budget as the sequential protocol.
    budget.train_steps_per_task = config_.train_steps_per_task * T;
    strategy_->on_task_start(1, *backbone_, pooled);
    const TaskTrainResult trained =
        train_task(*backbone_, *strategy_, 1, pooled, budget, train_rng_,
                   make_probe(1, pooled.task(), pooled_ref));
    strategy_->on_task_end(1, *backbone_, pooled);
    for (int i = 1; i <= T; ++i) {
      const double q = evaluate_row_cell(*backbone_, i);
      for (int t = i; t <= T; ++t) {
        if (std::isnan(q)) {
          matrix_.set_na(t, i);
        } else {
          matrix_.set(t, i, q);
        }
      }
    }
    record_unit(1, trained, start);
  }

  Eigen::MatrixXd pooled_reference(const TaskData& pooled) {
    const Eigen::Index n =
        std::min<Eigen::Index>(eval_.max_reference, pooled.sample_count());
    Eigen::MatrixXd ref(n, FeatureExtractor::kFeatureDim);
    for (Eigen::Index s = 0; s < n; s += eval_.sample_chunk) {
      const Eigen::Index m = std::min<Eigen::Index>(eval_.sample_chunk, n - s);
      ref.middleRows(s, m) = extractor_.embed(
          pooled.images().middleCols(s, m).cast<double>(), pooled.shape());
    }
    return ref;
  }

  QualityProbe make_probe(int task_index, const TaskSpec& task,
                          const Eigen::MatrixXd& refs) {
    return [this, task_index, &task, &refs](const GenerativeBackbone& model,
                                            int step) {
      Rng rng(derive_seed(config_.seed, kStreamProbeEval,
                          static_cast<std::uint64_t>(order_.order_id),
                          static_cast<std::uint64_t>(task_index),
                          static_cast<std::uint64_t>(step)));
      return quality(model, task, refs, eval_.n_gen, extractor_,
                     config_.sampler_steps, rng, eval_.sample_chunk);
    };
  }

  void record_unit(int slot, const TaskTrainResult& trained,
                   const std::chrono::steady_clock::time_point& start) {
    const auto k = static_cast<std::size_t>(slot - 1);
    best_steps_[k] = trained.best_step;
    diverged_[k] = trained.diverged ? 1 : 0;
    task_seconds_[k] = seconds_since(start);
    stored_params_[k] = static_cast<long long>(backbone_->param_count() +
                                               strategy_->stored_param_count());
  }

  RunConfig config_;
  ClassOrder order_;
  EvalOptions eval_;
  bool pooled_ = false;
  FeatureExtractor extractor_;
  TaskSequence sequence_;
  MetricMatrix matrix_;
  std::vector<TaskData> tasks_;
  std::vector<Eigen::MatrixXd> refs_;
  std::vector<int> best_steps_;
  std::vector<double> task_seconds_;
  std::vector<char> diverged_;
  std::vector<long long> stored_params_;
  std::unique_ptr<GenerativeBackbone> backbone_;
  std::unique_ptr<Strategy> strategy_;
  Rng train_rng_;
  int next_unit_ = 1;
};

void write_sequence_result(std::ostream& out, const SequenceResult& result) {
  nn::write_string(out, result.matrix.to_json());
  const std::size_t T = result.best_steps.size();
  nn::write_i64(out, static_cast<long long>(T));
  for (std::size_t t = 0; t < T; ++t) {
    nn::write_i64(out, result.best_steps[t]);
    nn::write_f64(out, result.task_seconds[t]);
    nn::write_i64(out, result.diverged[t]);
    nn::write_i64(out, result.stored_params[t]);
  }
}

SequenceResult read_sequence_result(std::istream& in) {
  MetricMatrix matrix = MetricMatrix::from_json(nn::read_string(in));
  SequenceResult result{std::move(matrix), {}, {}, {}, {}};
  const long long T = nn::read_i64(in);
  for (long long t = 0; t < T; ++t) {
    result.best_steps.push_back(static_cast<int>(nn::read_i64(in)));
    result.task_seconds.push_back(nn::read_f64(in));
    result.diverged.push_back(static_cast<char>(nn::read_i64(in)));
    result.stored_params.push_back(nn::read_i64(in));
  }
  return result;
}

nlohmann::json order_report_json(const ClassOrder& order,
                                 const EvalReport& report,
                                 const SequenceResult& result) {
  nlohmann::json j;
  j["order_id"] = order.order_id;
  j["permutation"] = order.permutation;
  j["aq"] = report.aq;
  j["aiq"] = report.aiq;
  j["afq"] = report.afq;
  j["fr"] = report.fr_defined ? nlohmann::json(report.fr) : nlohmann::json();
  j["fr_defined"] = report.fr_defined;
  j["best_steps"] = result.best_steps;
  nlohmann::json diverged = nlohmann::json::array();
  for (char d : result.diverged) diverged.push_back(d != 0);
  j["diverged"] = diverged;
  j["stored_params"] = result.stored_params;
  return j;
}

}  // namespace

double quality(const GenerativeBackbone& model, const TaskSpec& task,
               const Eigen::MatrixXd& reference_features, int n_gen,
               const FeatureExtractor& extractor, int sampler_steps, Rng& rng,
               int sample_chunk) {
  require(n_gen >= 2, "quality needs at least 2 generated samples");
  require(sample_chunk >= 1, "sample chunk must be positive");
  require(!task.class_labels.empty(), "task has no classes");
  require(reference_features.cols() == FeatureExtractor::kFeatureDim,
          "reference feature dimensionality mismatch");
  const ImageShape& shape = model.image_shape();
  Eigen::MatrixXd features(n_gen, FeatureExtractor::kFeatureDim);
  for (int start = 0; start < n_gen; start += sample_chunk) {
    const int m = std::min(sample_chunk, n_gen - start);
    std::vector<int> conditions;
    conditions.reserve(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
      const auto pick = static_cast<std::size_t>(
          rng.below(static_cast<std::uint64_t>(task.class_labels.size())));
      conditions.push_back(task.class_labels[pick]);
    }
    const Eigen::MatrixXd images = model.sample(conditions, sampler_steps, rng);
    if (!images.allFinite()) return kNaN;
    features.middleRows(start, m) = extractor.embed(images, shape);
  }
  return fid(reference_features, features);
}

TaskTrainResult train_task(GenerativeBackbone& backbone, Strategy& strategy,
                           int task_index, const TaskData& data,
                           const RunConfig& config, Rng& train_rng,
                           const QualityProbe& probe) {
  require(data.sample_count() > 0, "cannot train on an empty task");
  TaskTrainResult result;
  std::string best_blob;
  const bool track_path = strategy.tracks_parameter_path();
  const GenerativeBackbone* teacher = strategy.distill_teacher(task_index);
  const double teacher_weight = strategy.distill_weight();
  bool stopped = false;
  for (int step = 1; step <= config.train_steps_per_task && !stopped; ++step) {
    const Batch current = draw_batch(data, config.batch_size, train_rng);
    const Batch composed = strategy.compose_batch(task_index, current);
    for (int phase = 0; phase < backbone.phase_count(); ++phase) {
      PhaseLoss loss = backbone.phase_loss_grad(phase, composed, train_rng,
                                                teacher, teacher_weight);
      strategy.penalty_and_grad(backbone, loss.grad);
      strategy.transform_gradient(task_index, backbone, phase, composed,
                                  loss.grad);
      if (!loss.grad.allFinite()) {
        result.diverged = true;
        stopped = true;
        break;
      }
      Eigen::VectorXd params_before;
      if (track_path) params_before = backbone.params();
      if (strategy.owns_update(task_index)) {
        strategy.apply_update(task_index, backbone, phase, loss.grad);
      } else {
        backbone.apply_gradient(phase, loss.grad);
      }
      if (track_path) {
        strategy.after_update(task_index, backbone, loss.grad, params_before);
      }
    }
    if (stopped) break;
    if (step % config.eval_interval_steps == 0 ||
        step == config.train_steps_per_task) {
      const double q = probe(backbone, step);
      if (!std::isnan(q) && (!result.has_best || q < result.best_quality)) {
        result.best_quality = q;
        result.best_step = step;
        result.has_best = true;
        std::ostringstream blob;
        backbone.save_state(blob);
        best_blob = blob.str();
      }
    }
  }
  if (result.has_best) {
    std::istringstream in(best_blob);
    backbone.load_state(in);
  }
  return result;
}

SequenceResult run_sequence(const RunConfig& config, const ClassOrder& order,
                            const LabeledDataset& dataset,
                            const EvalOptions& eval) {
  SequenceRunner runner(config, order, dataset, eval);
  while (!runner.done()) runner.run_one_unit();
  return runner.take_result();
}

const std::vector<double>& default_search_grid() {
  static const std::vector<double> kGrid = {1e-3, 1e-2, 1e-1, 1.0,
                                            10.0, 100.0, 1e3, 1e4};
  return kGrid;
}

std::string grid_target_key(const std::string& strategy_id) {
  if (strategy_id == "l2" || strategy_id == "ewc" || strategy_id == "si" ||
      strategy_id == "mas") {
    return "lambda";
  }
  if (strategy_id == "kd") return "kd_weight";
  throw ConfigError("strategy '" + strategy_id +
                    "' has no grid-searchable hyperparameter");
}

GridResult grid_search(const ExperimentPlan& plan) {
  RunConfig config = plan.config;
  config.validate();
  GridResult result;
  result.target_key = grid_target_key(config.strategy_id);
  result.values = plan.grid.empty() ? default_search_grid() : plan.grid;
  require(!result.values.empty(), "grid must contain at least one value");
  require(result.values.size() <= 8, "grid is limited to 8 values");
  std::sort(result.values.begin(), result.values.end());
  const std::string data_root = resolve_data_root(plan.data_root);
  const LabeledDataset dataset = load_dataset(config.dataset_id, data_root);
  const ClassOrderBook book = load_order_book(data_root);
  const ClassOrder search_order = book.order(config.dataset_id, 1);
  bool found = false;
  double best = kNaN;
  for (double value : result.values) {
    RunConfig candidate = config;
    candidate.strategy_hyperparams[result.target_key] = value;
    const SequenceResult sequence =
        run_sequence(candidate, search_order, dataset, plan.eval);
    const double afq = average_final_quality(sequence.matrix);
    result.afqs.push_back(afq);
    // Strict improvement over an ascending sweep: ties keep the smaller
    // value.
    if (!std::isnan(afq) && (!found || afq < best)) {
      best = afq;
      result.chosen = value;
      found = true;
    }
  }
  require(found, "every grid value produced NA");
  return result;
}

std::string compute_run_id(const RunConfig& config) {
  const std::string canonical = run_config_to_json(config);
  const std::uint64_t digest =
      hash_bytes(canonical.data(), canonical.size());
  return config.dataset_id + "_" + to_string(config.backbone_kind) + "_" +
         config.strategy_id + "_" + hex64(digest);
}

ResultBundle run_benchmark(const ExperimentPlan& plan) {
  RunConfig config = plan.config;
  config.validate();
  const std::string run_id = compute_run_id(config);
  const fs::path bundle_dir = fs::path(plan.output_dir) / run_id;
  const fs::path ckpt_dir = bundle_dir / "checkpoints";
  const fs::path ckpt_path = ckpt_dir / "state.ckpt";
  fs::create_directories(ckpt_dir);

  const std::string data_root = resolve_data_root(plan.data_root);
  const LabeledDataset dataset = load_dataset(config.dataset_id, data_root);
  const ClassOrderBook book = load_order_book(data_root);
  std::vector<ClassOrder> orders;
  for (int id : config.class_order_ids) {
    orders.push_back(book.order(config.dataset_id, id));
  }
  write_text_file(bundle_dir / "config.json", run_config_to_json(config));

  std::size_t order_pos = 0;
  std::vector<SequenceResult> results;
  std::unique_ptr<SequenceRunner> runner;

  if (!plan.resume_token.empty()) {
    require(plan.resume_token == run_id,
            "resume token does not match this config's run id");
    require(fs::exists(ckpt_path), "no checkpoint to resume from");
    std::ifstream in(ckpt_path, std::ios::binary);
    require(in.good(), "cannot open checkpoint");
    require(nn::read_string(in) == kCheckpointMagic,
            "unrecognized checkpoint format");
    require(nn::read_string(in) == run_id, "checkpoint belongs to another run");
    order_pos = static_cast<std::size_t>(nn::read_i64(in));
    const long long done = nn::read_i64(in);
    require(done == static_cast<long long>(order_pos),
            "corrupt checkpoint: order bookkeeping mismatch");
    for (long long k = 0; k < done; ++k) {
      results.push_back(read_sequence_result(in));
    }
    if (nn::read_i64(in) != 0) {
      require(order_pos < orders.size(), "corrupt checkpoint: order index");
      runner = std::make_unique<SequenceRunner>(config, orders[order_pos],
                                                dataset, plan.eval);
      runner->load(in);
    }
  } else if (fs::exists(ckpt_path)) {
    fs::remove(ckpt_path);
  }

  int executed = 0;
  const auto should_stop = [&] {
    return plan.stop_after_tasks > 0 && executed >= plan.stop_after_tasks;
  };
  const auto save_checkpoint = [&] {
    std::ofstream out(ckpt_path, std::ios::binary | std::ios::trunc);
    require(out.good(), "cannot write checkpoint");
    nn::write_string(out, kCheckpointMagic);
    nn::write_string(out, run_id);
    nn::write_i64(out, static_cast<long long>(order_pos));
    nn::write_i64(out, static_cast<long long>(results.size()));
    for (const SequenceResult& done : results) {
      write_sequence_result(out, done);
    }
    nn::write_i64(out, runner ? 1 : 0);
    if (runner) runner->save(out);
    require(out.good(), "failed writing checkpoint");
  };

  ResultBundle bundle;
  bundle.run_id = run_id;
  bundle.bundle_dir = bundle_dir.string();

  for (; order_pos < orders.size(); ++order_pos) {
    if (!runner) {
      runner = std::make_unique<SequenceRunner>(config, orders[order_pos],
                                                dataset, plan.eval);
    }
    while (!runner->done()) {
      if (should_stop()) {
        save_checkpoint();
        bundle.complete = false;
        return bundle;
      }
      runner->run_one_unit();
      ++executed;
    }
    results.push_back(runner->take_result());
    runner.reset();
    if (should_stop() && order_pos + 1 < orders.size()) {
      ++order_pos;
      save_checkpoint();
      bundle.complete = false;
      return bundle;
    }
  }

  // Persist per-order matrices and the consolidated report.
  nlohmann::json report;
  report["run_id"] = run_id;
  report["metric_id"] = kMetricId;
  report["direction"] = to_string(MetricDirection::kLowerBetter);
  report["dataset_id"] = config.dataset_id;
  report["backbone_kind"] = to_string(config.backbone_kind);
  report["strategy_id"] = config.strategy_id;
  report["hyperparams"] = config.strategy_hyperparams;
  report["seed"] = config.seed;
  report["num_tasks"] = results.empty() ? 0 : results.front().matrix.num_tasks();
  nlohmann::json order_array = nlohmann::json::array();
  std::vector<EvalReport> reports;
  for (std::size_t k = 0; k < results.size(); ++k) {
    const int order_id = orders[k].order_id;
    results[k].matrix.save(
        (bundle_dir / ("matrix_order" + std::to_string(order_id) + ".json"))
            .string());
    EvalReport er = make_eval_report(results[k].matrix);
    order_array.push_back(order_report_json(orders[k], er, results[k]));
    reports.push_back(std::move(er));
    bundle.completed_order_ids.push_back(order_id);
  }
  const AggregateReport aggregate = aggregate_orders(reports);
  report["extractor_id"] = aggregate.extractor_id;
  report["orders"] = order_array;
  report["aggregate"] = {
      {"aq_mean", aggregate.aq_mean},
      {"aiq", stat_to_json(aggregate.aiq)},
      {"afq", stat_to_json(aggregate.afq)},
      {"fr", aggregate.fr_defined ? stat_to_json(aggregate.fr)
                                  : nlohmann::json()},
      {"fr_defined", aggregate.fr_defined},
      {"num_orders", aggregate.num_orders},
  };
  report["complete"] = true;
  write_text_file(bundle_dir / "report.json", report.dump(2) + "\n");

  // Wall-time / memory table; excluded from the content hash.
  std::ostringstream timing;
  timing << "order_id,task_index,wall_seconds,stored_params\n";
  for (std::size_t k = 0; k < results.size(); ++k) {
    for (std::size_t t = 0; t < results[k].task_seconds.size(); ++t) {
      timing << orders[k].order_id << "," << (t + 1) << ","
             << results[k].task_seconds[t] << "," << results[k].stored_params[t]
             << "\n";
    }
  }
  write_text_file(bundle_dir / "timing.csv", timing.str());

  emit_report(bundle_dir.string(), "csv");

  if (fs::exists(ckpt_path)) fs::remove(ckpt_path);
  if (fs::exists(ckpt_dir) && fs::is_empty(ckpt_dir)) fs::remove(ckpt_dir);

  bundle.per_order = std::move(reports);
  bundle.aggregate = aggregate;
  bundle.complete = true;
  return bundle;
}

void emit_report(const std::string& bundle_dir, const std::string& format) {
  require(format == "csv" || format == "plot",
          "unknown report format: " + format);
  const fs::path dir(bundle_dir);
  const nlohmann::json report =
      nlohmann::json::parse(read_text_file(dir / "report.json"));
  const std::string strategy = report.at("strategy_id").get<std::string>();
  const std::string dataset = report.at("dataset_id").get<std::string>();
  const std::string backbone = report.at("backbone_kind").get<std::string>();
  const auto& aggregate = report.at("aggregate");
  const std::vector<double> aq_mean = [&] {
    std::vector<double> v;
    for (const auto& x : aggregate.at("aq_mean")) v.push_back(json_number(x));
    return v;
  }();

  // AQ / running-AIQ curve: exactly one row per task.
  std::ostringstream curves;
  curves << "strategy,task,aq_mean,aiq_running\n";
  double running = 0.0;
  for (std::size_t t = 0; t < aq_mean.size(); ++t) {
    running += aq_mean[t];
    curves << strategy << "," << (t + 1) << "," << aq_mean[t] << ","
           << running / static_cast<double>(t + 1) << "\n";
  }
  write_text_file(dir / "curves.csv", curves.str());

  const auto stat_of = [&](const char* key) {
    MetricStat stat{kNaN, kNaN};
    const auto& j = aggregate.at(key);
    if (!j.is_null()) {
      stat.mean = json_number(j.at("mean"));
      stat.stddev = json_number(j.at("std"));
    }
    return stat;
  };
  const MetricStat aiq = stat_of("aiq");
  const MetricStat afq = stat_of("afq");
  const MetricStat fr = stat_of("fr");

  std::ostringstream summary;
  summary << "strategy,dataset,backbone,orders,aiq,afq,fr,"
             "aiq_mean,aiq_std,afq_mean,afq_std,fr_mean,fr_std\n";
  summary << strategy << "," << dataset << "," << backbone << ","
          << aggregate.at("num_orders").get<int>() << "," << format_stat(aiq)
          << "," << format_stat(afq) << "," << format_stat(fr) << ","
          << aiq.mean << "," << aiq.stddev << "," << afq.mean << ","
          << afq.stddev << "," << fr.mean << "," << fr.stddev << "\n";
  write_text_file(dir / "summary.csv", summary.str());

  if (format == "plot") {
    std::ostringstream svg;
    const int width = 640, height = 400, margin = 50;
    double lo = aq_mean.empty() ? 0.0 : aq_mean.front();
    double hi = lo;
    for (double v : aq_mean) {
      if (!std::isnan(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (!(hi > lo)) hi = lo + 1.0;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<line x1=\"" << margin << "\" y1=\"" << height - margin
        << "\" x2=\"" << width - margin << "\" y2=\"" << height - margin
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\""
        << margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" "
           "points=\"";
    for (std::size_t t = 0; t < aq_mean.size(); ++t) {
      const double fx = aq_mean.size() == 1
                            ? 0.5
                            : static_cast<double>(t) /
                                  static_cast<double>(aq_mean.size() - 1);
      const double fy = (aq_mean[t] - lo) / (hi - lo);
      const double x = margin + fx * (width - 2 * margin);
      const double y = height - margin - fy * (height - 2 * margin);
      svg << x << "," << y << " ";
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-size=\"14\">task</text>\n";
    svg << "<text x=\"16\" y=\"" << height / 2
        << "\" font-size=\"14\" transform=\"rotate(-90 16 " << height / 2
        << ")\" text-anchor=\"middle\">mean AQ (" << strategy
        << ")</text>\n</svg>\n";
    write_text_file(dir / "curves.svg", svg.str());
  }
}

std::string bundle_content_hash(const std::string& bundle_dir) {
  const fs::path root(bundle_dir);
  require(fs::exists(root), "bundle directory does not exist: " + bundle_dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root);
    const std::string rel_str = rel.generic_string();
    if (rel_str == "timing.csv") continue;
    if (rel_str.rfind("checkpoints/", 0) == 0) continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  Fnv1a hasher;
  for (const fs::path& rel : files) {
    hasher.update(rel.generic_string());
    const std::string bytes = read_text_file(root / rel);
    hasher.update(bytes);
  }
  return hex64(hasher.digest());
}

}  // namespace clog

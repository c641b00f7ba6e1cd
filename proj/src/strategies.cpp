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

#include "clog/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "clog/nn/params.hpp"
#include "clog/replay_buffer.hpp"

namespace clog {

namespace {

constexpr double kDefaultLambda = 1.0;
constexpr double kDefaultKdWeight = 1.0;
constexpr double kDefaultBufferCapacity = 500.0;
constexpr double kDefaultLoraRank = 4.0;
constexpr double kDefaultSiXi = 1e-3;
constexpr double kAdapterLearningRate = 1e-3;  // matches BackboneOptions

void check_hyperparam_keys(const RunConfig& config,
                           const std::set<std::string>& known) {
  for (const auto& [key, value] : config.strategy_hyperparams) {
    require(known.count(key) != 0, "strategy '" + config.strategy_id +
                                       "' does not accept hyperparameter '" +
                                       key + "'");
    (void)value;
  }
}

Batch concat_batches(const Batch& a, const Batch& b) {
  if (b.size() == 0) return a;
  Batch out;
  out.images.resize(a.images.rows(), a.images.cols() + b.images.cols());
  out.images << a.images, b.images;
  out.conditions = a.conditions;
  out.conditions.insert(out.conditions.end(), b.conditions.begin(),
                        b.conditions.end());
  return out;
}

void observe_batch(ReplayBuffer& buffer, const Batch& batch, int task_index) {
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    ReplaySample sample;
    sample.condition = batch.conditions[static_cast<std::size_t>(j)];
    sample.target = batch.images.col(j).cast<float>();
    sample.source_task_index = task_index;
    buffer.observe(std::move(sample));
  }
}

Batch batch_from_samples(const std::vector<ReplaySample>& samples,
                         Eigen::Index pixel_count) {
  Batch batch;
  batch.images.resize(pixel_count, static_cast<Eigen::Index>(samples.size()));
  batch.conditions.reserve(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    require(samples[k].target.size() == pixel_count,
            "replay sample pixel count mismatch");
    batch.images.col(static_cast<Eigen::Index>(k)) =
        samples[k].target.cast<double>();
    batch.conditions.push_back(samples[k].condition);
  }
  return batch;
}

void write_buffer(std::ostream& out, const ReplayBuffer& buffer) {
  nn::write_i64(out, buffer.capacity());
  nn::write_i64(out, buffer.seen_count());
  nn::write_rng(out, buffer.rng());
  nn::write_i64(out, static_cast<long long>(buffer.slots().size()));
  for (const ReplaySample& s : buffer.slots()) {
    nn::write_i64(out, s.condition);
    nn::write_i64(out, s.source_task_index);
    nn::write_vec(out, s.target.cast<double>());
  }
}

ReplayBuffer read_buffer(std::istream& in) {
  const int capacity = static_cast<int>(nn::read_i64(in));
  const long long seen = nn::read_i64(in);
  ReplayBuffer buffer(capacity, 0);
  buffer.rng() = nn::read_rng(in);
  buffer.set_seen_count(seen);
  const long long count = nn::read_i64(in);
  for (long long k = 0; k < count; ++k) {
    ReplaySample s;
    s.condition = static_cast<int>(nn::read_i64(in));
    s.source_task_index = static_cast<int>(nn::read_i64(in));
    s.target = nn::read_vec(in).cast<float>();
    buffer.mutable_slots().push_back(std::move(s));
  }
  return buffer;
}

int hyperparam_int(const RunConfig& config, const std::string& key,
                   double fallback) {
  const double v = config.hyperparam(key, fallback);
  require(v >= 0.0 && v == std::floor(v),
          "hyperparameter '" + key + "' must be a non-negative integer");
  return static_cast<int>(v);
}

}  // namespace

Eigen::VectorXd agem_project(const Eigen::VectorXd& g,
                             const Eigen::VectorXd& g_ref) {
  require(g.size() == g_ref.size(), "agem_project length mismatch");
  const double ref_sq = g_ref.squaredNorm();
  if (ref_sq == 0.0) return g;
  const double dot = g.dot(g_ref);
  if (dot >= 0.0) return g;
  return g - (dot / ref_sq) * g_ref;
}

Batch draw_batch(const TaskData& data, int batch_size, Rng& rng) {
  require(batch_size >= 1, "batch size must be positive");
  require(data.sample_count() > 0, "cannot draw from an empty task");
  Batch batch;
  batch.images.resize(data.images().rows(), batch_size);
  batch.conditions.reserve(static_cast<std::size_t>(batch_size));
  for (int j = 0; j < batch_size; ++j) {
    const auto k = static_cast<Eigen::Index>(
        rng.below(static_cast<std::uint64_t>(data.sample_count())));
    batch.images.col(j) = data.images().col(k).cast<double>();
    batch.conditions.push_back(data.conditions()[static_cast<std::size_t>(k)]);
  }
  return batch;
}

Eigen::VectorXd estimate_fisher(GenerativeBackbone& backbone,
                                const TaskData& data, int n_batches,
                                int batch_size, Rng& rng) {
  Eigen::VectorXd fisher = Eigen::VectorXd::Zero(backbone.param_count());
  for (int b = 0; b < n_batches; ++b) {
    Batch batch = draw_batch(data, batch_size, rng);
    fisher += backbone.squared_grad_importance(batch, rng);
  }
  return fisher / static_cast<double>(n_batches);
}

Eigen::VectorXd estimate_output_importance(GenerativeBackbone& backbone,
                                           const TaskData& data, int n_batches,
                                           int batch_size, Rng& rng) {
  Eigen::VectorXd importance = Eigen::VectorXd::Zero(backbone.param_count());
  for (int b = 0; b < n_batches; ++b) {
    Batch batch = draw_batch(data, batch_size, rng);
    importance += backbone.output_grad_importance(batch, rng);
  }
  return importance / static_cast<double>(n_batches);
}

Strategy::Strategy(std::string id, std::uint64_t seed)
    : id_(std::move(id)), rng_(seed) {}

Strategy::~Strategy() = default;

void Strategy::on_task_start(int, GenerativeBackbone&, const TaskData&) {}

Batch Strategy::compose_batch(int, const Batch& current) { return current; }

double Strategy::penalty_and_grad(const GenerativeBackbone&,
                                  Eigen::VectorXd&) {
  return 0.0;
}

void Strategy::transform_gradient(int, GenerativeBackbone&, int, const Batch&,
                                  Eigen::VectorXd&) {}

bool Strategy::tracks_parameter_path() const { return false; }

void Strategy::after_update(int, GenerativeBackbone&, const Eigen::VectorXd&,
                            const Eigen::VectorXd&) {}

void Strategy::on_task_end(int, GenerativeBackbone&, const TaskData&) {}

const GenerativeBackbone* Strategy::select_model(int) const { return nullptr; }

const GenerativeBackbone* Strategy::distill_teacher(int) const {
  return nullptr;
}

double Strategy::distill_weight() const { return 0.0; }

bool Strategy::owns_update(int) const { return false; }

void Strategy::apply_update(int, GenerativeBackbone&, int,
                            const Eigen::VectorXd&) {
  check_invariant(false, "apply_update called on a strategy that does not own "
                         "parameter updates");
}

Eigen::Index Strategy::stored_param_count() const { return 0; }

void Strategy::save_state(std::ostream& out) const { nn::write_rng(out, rng_); }

void Strategy::load_state(std::istream& in, const GenerativeBackbone&) {
  rng_ = nn::read_rng(in);
}

namespace {

/// Naive continual learning: every hook is the base no-op. Also used verbatim
/// for the pooled upper bound, whose special data handling lives in the
/// runner.
class NclStrategy : public Strategy {
 public:
  using Strategy::Strategy;
};

/// One independently initialized model per task; evaluation routes each
/// reference task to its own frozen snapshot.
class EnsembleStrategy : public Strategy {
 public:
  using Strategy::Strategy;

  void on_task_start(int task_index, GenerativeBackbone& backbone,
                     const TaskData&) override {
    if (task_index > 1) backbone.reinitialize(rng_);
  }

  void on_task_end(int, GenerativeBackbone& backbone,
                   const TaskData&) override {
    snapshots_.push_back(backbone.clone());
  }

  const GenerativeBackbone* select_model(int task_index) const override {
    require(task_index >= 1 &&
                task_index <= static_cast<int>(snapshots_.size()),
            "no trained model for the requested task yet");
    return snapshots_[static_cast<std::size_t>(task_index - 1)].get();
  }

  Eigen::Index stored_param_count() const override {
    Eigen::Index total = 0;
    for (const auto& model : snapshots_) total += model->param_count();
    return total;
  }

  void save_state(std::ostream& out) const override {
    Strategy::save_state(out);
    nn::write_i64(out, static_cast<long long>(snapshots_.size()));
    for (const auto& model : snapshots_) model->save_state(out);
  }

  void load_state(std::istream& in,
                  const GenerativeBackbone& prototype) override {
    Strategy::load_state(in, prototype);
    snapshots_.clear();
    const long long count = nn::read_i64(in);
    for (long long k = 0; k < count; ++k) {
      auto model = prototype.clone();
      model->load_state(in);
      snapshots_.push_back(std::move(model));
    }
  }

 private:
  std::vector<std::unique_ptr<GenerativeBackbone>> snapshots_;
};

/// Experience replay: reservoir buffer over the sample stream, replayed
/// samples concatenated onto every batch from task 2 on.
class ErStrategy : public Strategy {
 public:
  ErStrategy(std::string id, std::uint64_t seed, int capacity,
             int replay_batch_size)
      : Strategy(std::move(id), seed),
        replay_batch_size_(replay_batch_size),
        buffer_(capacity, derive_seed(seed, 1)) {}

  Batch compose_batch(int task_index, const Batch& current) override {
    Batch out = current;
    if (task_index > 1 && replay_batch_size_ > 0 && !buffer_.empty()) {
      const auto samples =
          sample_replay_batch(buffer_, replay_batch_size_, rng_);
      out = concat_batches(current,
                           batch_from_samples(samples, current.images.rows()));
    }
    observe_batch(buffer_, current, task_index);
    return out;
  }

  void save_state(std::ostream& out) const override {
    Strategy::save_state(out);
    write_buffer(out, buffer_);
  }

  void load_state(std::istream& in,
                  const GenerativeBackbone& prototype) override {
    Strategy::load_state(in, prototype);
    buffer_ = read_buffer(in);
  }

 protected:
  int replay_batch_size_ = 0;
  ReplayBuffer buffer_;
};

/// Generative replay: a frozen copy of the model taken at task start supplies
/// synthetic samples of previously seen classes.
class GrStrategy : public Strategy {
 public:
  GrStrategy(std::string id, std::uint64_t seed, int replay_batch_size,
             int sampler_steps)
      : Strategy(std::move(id), seed),
        replay_batch_size_(replay_batch_size),
        sampler_steps_(sampler_steps) {}

  void on_task_start(int task_index, GenerativeBackbone& backbone,
                     const TaskData&) override {
    frozen_ = (task_index > 1 && replay_batch_size_ > 0) ? backbone.clone()
                                                         : nullptr;
  }

  Batch compose_batch(int task_index, const Batch& current) override {
    if (task_index <= 1 || replay_batch_size_ <= 0) return current;
    check_invariant(frozen_ != nullptr && !seen_classes_.empty(),
                    "generative replay sampler missing");
    std::vector<int> conditions;
    conditions.reserve(static_cast<std::size_t>(replay_batch_size_));
    for (int k = 0; k < replay_batch_size_; ++k) {
      const auto pick = static_cast<std::size_t>(
          rng_.below(static_cast<std::uint64_t>(seen_classes_.size())));
      conditions.push_back(seen_classes_[pick]);
    }
    Batch synthetic;
    synthetic.images = frozen_->sample(conditions, sampler_steps_, rng_);
    synthetic.conditions = std::move(conditions);
    if (!synthetic.images.allFinite()) {
      throw DataError("replay generation produced non-finite pixels");
    }
    return concat_batches(current, synthetic);
  }

  void on_task_end(int, GenerativeBackbone&, const TaskData& data) override {
    for (int c : data.task().class_labels) {
      if (std::find(seen_classes_.begin(), seen_classes_.end(), c) ==
          seen_classes_.end()) {
        seen_classes_.push_back(c);
      }
    }
    std::sort(seen_classes_.begin(), seen_classes_.end());
  }

  void save_state(std::ostream& out) const override {
    Strategy::save_state(out);
    nn::write_i64(out, static_cast<long long>(seen_classes_.size()));
    for (int c : seen_classes_) nn::write_i64(out, c);
  }

  void load_state(std::istream& in,
                  const GenerativeBackbone& prototype) override {
    Strategy::load_state(in, prototype);
    seen_classes_.clear();
    const long long count = nn::read_i64(in);
    for (long long k = 0; k < count; ++k) {
      seen_classes_.push_back(static_cast<int>(nn::read_i64(in)));
    }
    frozen_ = nullptr;
  }

 private:
  int replay_batch_size_ = 0;
  int sampler_steps_ = 0;
  std::vector<int> seen_classes_;
  std::unique_ptr<GenerativeBackbone> frozen_;
};

/// Output distillation against the model frozen at task start.
class KdStrategy : public Strategy {
 public:
  KdStrategy(std::string id, std::uint64_t seed, double weight)
      : Strategy(std::move(id), seed), weight_(weight) {}

  void on_task_start(int task_index, GenerativeBackbone& backbone,
                     const TaskData&) override {
    teacher_ = (task_index > 1 && weight_ > 0.0) ? backbone.clone() : nullptr;
  }

  const GenerativeBackbone* distill_teacher(int task_index) const override {
    return task_index > 1 ? teacher_.get() : nullptr;
  }

  double distill_weight() const override { return weight_; }

 private:
  double weight_ = 0.0;
  std::unique_ptr<GenerativeBackbone> teacher_;
};

/// Quadratic parameter anchoring; the importance weights distinguish the
/// plain, Fisher-weighted, path-integral, and output-sensitivity variants.
class QuadraticPenaltyStrategy : public Strategy {
 public:
  enum class Kind { kPlain, kFisher, kPathIntegral, kOutputSensitivity };

  QuadraticPenaltyStrategy(std::string id, std::uint64_t seed, Kind kind,
                           double lambda, double xi, int batch_size)
      : Strategy(std::move(id), seed),
        kind_(kind),
        lambda_(lambda),
        xi_(xi),
        batch_size_(batch_size) {}

  void on_task_start(int, GenerativeBackbone& backbone,
                     const TaskData&) override {
    if (lambda_ <= 0.0) return;
    ensure_sized(backbone.param_count());
    if (kind_ == Kind::kPathIntegral) {
      task_start_params_ = backbone.params();
    }
  }

  double penalty_and_grad(const GenerativeBackbone& backbone,
                          Eigen::VectorXd& grad) override {
    if (lambda_ <= 0.0 || !has_reference_) return 0.0;
    const Eigen::VectorXd params = backbone.params();
    if (kind_ == Kind::kPlain) {
      grad.array() += 2.0 * lambda_ * (params - reference_).array();
      return l2_penalty(params, reference_, lambda_);
    }
    add_weighted_quadratic_grad(params, reference_, importance_, lambda_,
                                grad);
    return weighted_quadratic_penalty(params, reference_, importance_,
                                      lambda_);
  }

  bool tracks_parameter_path() const override {
    return kind_ == Kind::kPathIntegral && lambda_ > 0.0;
  }

  void after_update(int, GenerativeBackbone& backbone,
                    const Eigen::VectorXd& applied_grad,
                    const Eigen::VectorXd& params_before) override {
    if (lambda_ <= 0.0 || kind_ != Kind::kPathIntegral) return;
    si_accumulate(si_omega_, applied_grad,
                  backbone.params() - params_before);
  }

  void on_task_end(int, GenerativeBackbone& backbone,
                   const TaskData& data) override {
    if (lambda_ <= 0.0) return;
    ensure_sized(backbone.param_count());
    switch (kind_) {
      case Kind::kPlain:
        break;
      case Kind::kFisher:
        importance_ +=
            estimate_fisher(backbone, data, kImportanceBatches, batch_size_,
                            rng_);
        break;
      case Kind::kPathIntegral:
        si_consolidate(si_omega_, backbone.params() - task_start_params_, xi_,
                       importance_);
        break;
      case Kind::kOutputSensitivity:
        importance_ += estimate_output_importance(
            backbone, data, kImportanceBatches, batch_size_, rng_);
        break;
    }
    reference_ = backbone.params();
    has_reference_ = true;
  }

  void save_state(std::ostream& out) const override {
    Strategy::save_state(out);
    nn::write_i64(out, has_reference_ ? 1 : 0);
    nn::write_vec(out, reference_);
    nn::write_vec(out, importance_);
    nn::write_vec(out, si_omega_);
  }

  void load_state(std::istream& in,
                  const GenerativeBackbone& prototype) override {
    Strategy::load_state(in, prototype);
    has_reference_ = nn::read_i64(in) != 0;
    reference_ = nn::read_vec(in);
    importance_ = nn::read_vec(in);
    si_omega_ = nn::read_vec(in);
    ensure_sized(prototype.param_count());
  }

 private:
  void ensure_sized(Eigen::Index n) {
    if (importance_.size() != n) {
      importance_ = Eigen::VectorXd::Zero(n);
      si_omega_ = Eigen::VectorXd::Zero(n);
      reference_ = Eigen::VectorXd::Zero(n);
      task_start_params_ = Eigen::VectorXd::Zero(n);
    }
  }

  Kind kind_;
  double lambda_ = 0.0;
  double xi_ = kDefaultSiXi;
  int batch_size_ = 0;
  bool has_reference_ = false;
  Eigen::VectorXd reference_;
  Eigen::VectorXd importance_;
  Eigen::VectorXd si_omega_;
  Eigen::VectorXd task_start_params_;
};

/// Gradient episodic memory (averaged form): keeps a reservoir buffer and
/// projects each step's gradient to not conflict with the replay gradient.
class AgemStrategy : public ErStrategy {
 public:
  AgemStrategy(std::string id, std::uint64_t seed, int capacity,
               int replay_batch_size)
      : ErStrategy(std::move(id), seed, capacity, replay_batch_size) {}

  Batch compose_batch(int task_index, const Batch& current) override {
    // The buffer feeds the reference gradient, never the training batch.
    observe_batch(buffer_, current, task_index);
    return current;
  }

  void transform_gradient(int task_index, GenerativeBackbone& backbone,
                          int phase, const Batch&,
                          Eigen::VectorXd& grad) override {
    if (task_index <= 1 || replay_batch_size_ <= 0 || buffer_.empty()) return;
    const auto samples = sample_replay_batch(buffer_, replay_batch_size_, rng_);
    const Batch replay =
        batch_from_samples(samples, backbone.image_shape().pixel_count());
    const PhaseLoss ref =
        backbone.phase_loss_grad(phase, replay, rng_, nullptr, 0.0);
    grad = agem_project(grad, ref.grad);
  }
};

/// First task trains the full backbone; later tasks train low-rank adapter
/// deltas on frozen base weights, one adapter set per task.
class CloraStrategy : public Strategy {
 public:
  CloraStrategy(std::string id, std::uint64_t seed, int rank, double lr)
      : Strategy(std::move(id), seed), rank_(rank), learning_rate_(lr) {
    require(rank_ >= 1, "lora_rank must be at least 1");
  }

  void on_task_start(int task_index, GenerativeBackbone& backbone,
                     const TaskData&) override {
    if (task_index <= 1) return;
    check_invariant(base_params_.size() == backbone.param_count(),
                    "adapter tuning started before base training finished");
    backbone.set_params(base_params_);
    attach_fresh_adapters(backbone);
  }

  bool owns_update(int task_index) const override { return task_index > 1; }

  void apply_update(int, GenerativeBackbone& backbone, int phase,
                    const Eigen::VectorXd& grad) override {
    // Chain rule through W_eff = W_base + B A: dA = B^T dW, dB = dW A^T.
    Eigen::VectorXd adapter_grad = Eigen::VectorXd::Zero(adapter_params_.size());
    for (const AdapterLayer& layer : layers_) {
      if (layer.phase != phase) continue;
      Eigen::Map<const Eigen::MatrixXd> dw(grad.data() + layer.weight_offset,
                                           layer.rows, layer.cols);
      Eigen::Map<const Eigen::MatrixXd> a(
          adapter_params_.data() + layer.a_offset, rank_, layer.cols);
      Eigen::Map<const Eigen::MatrixXd> b(
          adapter_params_.data() + layer.b_offset, layer.rows, rank_);
      Eigen::Map<Eigen::MatrixXd> da(adapter_grad.data() + layer.a_offset,
                                     rank_, layer.cols);
      Eigen::Map<Eigen::MatrixXd> db(adapter_grad.data() + layer.b_offset,
                                     layer.rows, rank_);
      da = b.transpose() * dw;
      db = dw * a.transpose();
    }
    if (static_cast<std::size_t>(phase) >= adam_.size()) return;
    adam_[static_cast<std::size_t>(phase)].step(adapter_params_, adapter_grad);
    materialize(backbone, phase);
  }

  void on_task_end(int, GenerativeBackbone& backbone,
                   const TaskData&) override {
    if (base_params_.size() == 0) base_params_ = backbone.params();
    snapshots_.push_back(backbone.clone());
  }

  const GenerativeBackbone* select_model(int task_index) const override {
    require(task_index >= 1 &&
                task_index <= static_cast<int>(snapshots_.size()),
            "no trained model for the requested task yet");
    return snapshots_[static_cast<std::size_t>(task_index - 1)].get();
  }

  Eigen::Index stored_param_count() const override {
    Eigen::Index total = adapter_params_.size();
    for (const auto& model : snapshots_) total += model->param_count();
    return total;
  }

  void save_state(std::ostream& out) const override {
    Strategy::save_state(out);
    nn::write_vec(out, base_params_);
    nn::write_i64(out, static_cast<long long>(snapshots_.size()));
    for (const auto& model : snapshots_) model->save_state(out);
  }

  void load_state(std::istream& in,
                  const GenerativeBackbone& prototype) override {
    Strategy::load_state(in, prototype);
    base_params_ = nn::read_vec(in);
    snapshots_.clear();
    const long long count = nn::read_i64(in);
    for (long long k = 0; k < count; ++k) {
      auto model = prototype.clone();
      model->load_state(in);
      snapshots_.push_back(std::move(model));
    }
  }

 private:
  struct AdapterLayer {
    Eigen::Index weight_offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    int phase = 0;
    Eigen::Index a_offset = 0;
    Eigen::Index b_offset = 0;
  };

  void attach_fresh_adapters(GenerativeBackbone& backbone) {
    layers_.clear();
    Eigen::Index total = 0;
    for (const nn::ParamEntry& entry : backbone.param_entries()) {
      if (entry.rows < 2 || entry.cols < 2) continue;  // vectors stay frozen
      require(rank_ < std::min(entry.rows, entry.cols),
              "lora_rank must be smaller than the smallest adapted "
              "weight dimension");
      AdapterLayer layer;
      layer.weight_offset = entry.offset;
      layer.rows = entry.rows;
      layer.cols = entry.cols;
      layer.phase = entry.phase;
      layer.a_offset = total;
      total += rank_ * entry.cols;
      layer.b_offset = total;
      total += entry.rows * rank_;
      layers_.push_back(layer);
    }
    check_invariant(!layers_.empty(), "backbone has no adaptable weights");
    adapter_params_ = Eigen::VectorXd::Zero(total);
    for (const AdapterLayer& layer : layers_) {
      Eigen::Map<Eigen::MatrixXd> a(adapter_params_.data() + layer.a_offset,
                                    rank_, layer.cols);
      const double std = 1.0 / std::sqrt(static_cast<double>(layer.cols));
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        for (Eigen::Index r = 0; r < a.rows(); ++r) {
          a(r, c) = std * rng_.normal();
        }
      }
      // B stays zero: a fresh adapter is an exact identity delta.
    }
    // Backbones register parameters grouped by phase, so each phase's adapter
    // entries form one contiguous range of adapter_params_.
    adam_.clear();
    int phase_count = 0;
    for (const AdapterLayer& layer : layers_) {
      phase_count = std::max(phase_count, layer.phase + 1);
    }
    for (int p = 0; p < phase_count; ++p) {
      Eigen::Index begin = total;
      Eigen::Index end = 0;
      for (const AdapterLayer& layer : layers_) {
        if (layer.phase != p) continue;
        begin = std::min(begin, layer.a_offset);
        end = std::max(end, layer.b_offset + layer.rows * rank_);
      }
      if (end <= begin) {
        adam_.emplace_back(0, 0, learning_rate_);
      } else {
        adam_.emplace_back(begin, end - begin, learning_rate_);
      }
    }
  }

  void materialize(GenerativeBackbone& backbone, int phase) {
    Eigen::VectorXd params = backbone.params();
    for (const AdapterLayer& layer : layers_) {
      if (layer.phase != phase) continue;
      Eigen::Map<const Eigen::MatrixXd> base(
          base_params_.data() + layer.weight_offset, layer.rows, layer.cols);
      Eigen::Map<const Eigen::MatrixXd> a(
          adapter_params_.data() + layer.a_offset, rank_, layer.cols);
      Eigen::Map<const Eigen::MatrixXd> b(
          adapter_params_.data() + layer.b_offset, layer.rows, rank_);
      Eigen::Map<Eigen::MatrixXd> w(params.data() + layer.weight_offset,
                                    layer.rows, layer.cols);
      w = base + b * a;
    }
    backbone.set_params(params);
  }

  int rank_ = 0;
  double learning_rate_ = 0.0;
  Eigen::VectorXd base_params_;
  Eigen::VectorXd adapter_params_;
  std::vector<AdapterLayer> layers_;
  std::vector<nn::Adam> adam_;
  std::vector<std::unique_ptr<GenerativeBackbone>> snapshots_;
};

}  // namespace

std::unique_ptr<Strategy> make_strategy(const RunConfig& config,
                                        std::uint64_t strategy_seed) {
  const std::string& id = config.strategy_id;
  if (id == "ncl" || id == "noncl" || id == "ensemble") {
    check_hyperparam_keys(config, {});
    if (id == "ensemble") {
      return std::make_unique<EnsembleStrategy>(id, strategy_seed);
    }
    return std::make_unique<NclStrategy>(id, strategy_seed);
  }
  if (id == "er") {
    check_hyperparam_keys(config, {"buffer_capacity"});
    return std::make_unique<ErStrategy>(
        id, strategy_seed,
        hyperparam_int(config, "buffer_capacity", kDefaultBufferCapacity),
        config.replay_batch_size);
  }
  if (id == "gr") {
    check_hyperparam_keys(config, {});
    return std::make_unique<GrStrategy>(id, strategy_seed,
                                        config.replay_batch_size,
                                        config.sampler_steps);
  }
  if (id == "kd") {
    check_hyperparam_keys(config, {"kd_weight"});
    return std::make_unique<KdStrategy>(
        id, strategy_seed, config.hyperparam("kd_weight", kDefaultKdWeight));
  }
  if (id == "l2" || id == "ewc" || id == "si" || id == "mas") {
    using Kind = QuadraticPenaltyStrategy::Kind;
    Kind kind = Kind::kPlain;
    std::set<std::string> known = {"lambda"};
    if (id == "ewc") kind = Kind::kFisher;
    if (id == "mas") kind = Kind::kOutputSensitivity;
    if (id == "si") {
      kind = Kind::kPathIntegral;
      known.insert("si_xi");
    }
    check_hyperparam_keys(config, known);
    return std::make_unique<QuadraticPenaltyStrategy>(
        id, strategy_seed, kind, config.hyperparam("lambda", kDefaultLambda),
        config.hyperparam("si_xi", kDefaultSiXi), config.batch_size);
  }
  if (id == "agem") {
    check_hyperparam_keys(config, {"buffer_capacity"});
    return std::make_unique<AgemStrategy>(
        id, strategy_seed,
        hyperparam_int(config, "buffer_capacity", kDefaultBufferCapacity),
        config.replay_batch_size);
  }
  if (id == "clora") {
    check_hyperparam_keys(config, {"lora_rank"});
    return std::make_unique<CloraStrategy>(
        id, strategy_seed,
        hyperparam_int(config, "lora_rank", kDefaultLoraRank),
        kAdapterLearningRate);
  }
  throw ConfigError("unknown strategy_id: " + id);
}

}  // namespace clog

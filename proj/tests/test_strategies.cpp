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

#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "clog/errors.hpp"
#include "clog/replay_buffer.hpp"
#include "clog/runner.hpp"
#include "clog/strategies.hpp"
#include "test_util.hpp"

using namespace clog;
using clog_test::synthetic_task;

namespace {

const ImageShape kShape{1, 8, 8};

BackboneOptions tiny_options() {
  BackboneOptions options;
  options.base_channels = 4;
  options.embed_dim = 8;
  options.diffusion_steps = 25;
  return options;
}

std::unique_ptr<GenerativeBackbone> tiny_diffusion(std::uint64_t seed = 5) {
  Rng init(seed);
  return make_backbone(BackboneKind::kDiffusion, kShape, 4, tiny_options(),
                       init);
}

RunConfig base_config(const std::string& strategy_id,
                      std::map<std::string, double> hyperparams = {}) {
  RunConfig config;
  config.dataset_id = "shapes8";
  config.classes_per_task = 2;
  config.strategy_id = strategy_id;
  config.strategy_hyperparams = std::move(hyperparams);
  config.train_steps_per_task = 6;
  config.eval_interval_steps = 3;
  config.sampler_steps = 4;
  config.batch_size = 4;
  config.replay_batch_size = 0;
  config.seed = 99;
  return config;
}

Batch batch_for(const TaskData& data, int n, std::uint64_t seed) {
  Rng rng(seed);
  return draw_batch(data, n, rng);
}

// A few optimizer steps so the output head leaves its zero initialization
// (output-sensitivity importance is identically zero before that).
void warm_up(GenerativeBackbone& backbone, const TaskData& data, int steps,
             std::uint64_t seed) {
  Rng rng(seed);
  for (int s = 0; s < steps; ++s) {
    const Batch batch = draw_batch(data, 4, rng);
    for (int phase = 0; phase < backbone.phase_count(); ++phase) {
      PhaseLoss loss = backbone.phase_loss_grad(phase, batch, rng, nullptr, 0.0);
      backbone.apply_gradient(phase, loss.grad);
    }
  }
}

ReplaySample sample_with(int condition, float value) {
  ReplaySample s;
  s.condition = condition;
  s.target = Eigen::VectorXf::Constant(4, value);
  s.source_task_index = 1;
  return s;
}

}  // namespace

TEST_CASE("quadratic penalty free functions: hand oracles") {
  Eigen::VectorXd params(2), reference(2), weights(2);
  params << 2, 7;
  reference << 1, 2;
  weights << 2, 0;
  CHECK(l2_penalty(params, reference, 1.0) == doctest::Approx(26.0));
  Eigen::VectorXd simple(2);
  simple << 1, 2;
  CHECK(l2_penalty(simple, Eigen::VectorXd::Zero(2), 1.0) ==
        doctest::Approx(5.0));
  CHECK(l2_penalty(simple, Eigen::VectorXd::Zero(2), 2.0) ==
        doctest::Approx(10.0));
  // Weighted form: 1 * (2 * 1^2 + 0 * 5^2) = 2.
  CHECK(ewc_penalty(params, reference, weights, 1.0) == doctest::Approx(2.0));
  CHECK(weighted_quadratic_penalty(params, reference, weights, 0.0) == 0.0);

  Eigen::VectorXd grad = Eigen::VectorXd::Ones(2);
  add_weighted_quadratic_grad(params, reference, weights, 0.5, grad);
  CHECK(grad(0) == doctest::Approx(1.0 + 2.0 * 0.5 * 2.0 * 1.0));
  CHECK(grad(1) == doctest::Approx(1.0));

  CHECK_THROWS_AS(l2_penalty(params, Eigen::VectorXd::Zero(3), 1.0),
                  ConfigError);
  CHECK_THROWS_AS(ewc_penalty(params, reference, Eigen::VectorXd::Zero(3), 1.0),
                  ConfigError);
}

TEST_CASE("ewc penalty with unit weights reduces to the plain l2 penalty") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(20));
    Eigen::VectorXd params(n), reference(n);
    for (int k = 0; k < n; ++k) {
      params(k) = rng.normal();
      reference(k) = rng.normal();
    }
    const double lambda = rng.uniform(0.0, 10.0);
    const double weighted =
        ewc_penalty(params, reference, Eigen::VectorXd::Ones(n), lambda);
    const double plain = l2_penalty(params, reference, lambda);
    CHECK(std::abs(weighted - plain) <= 1e-12 * (1.0 + std::abs(plain)));
  }
}

TEST_CASE("path-integral accumulation and consolidation oracles") {
  Eigen::VectorXd omega = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd grad(2), delta(2);
  grad << 2, -1;
  delta << 0.5, 0.5;
  si_accumulate(omega, grad, delta);
  CHECK(omega(0) == doctest::Approx(-1.0));
  CHECK(omega(1) == doctest::Approx(0.5));

  Eigen::VectorXd importance = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd task_delta(2);
  task_delta << 1, 2;
  si_consolidate(omega, task_delta, 1.0, importance);
  CHECK(importance(0) == doctest::Approx(-0.5));
  CHECK(importance(1) == doctest::Approx(0.1));
  CHECK(omega.isZero(0.0));

  Eigen::VectorXd bad = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(si_consolidate(bad, task_delta, 0.0, importance),
                  ConfigError);
  CHECK_THROWS_AS(si_accumulate(omega, grad, Eigen::VectorXd::Zero(3)),
                  ConfigError);
}

TEST_CASE("agem_project: hand cases") {
  Eigen::VectorXd g(2), ref(2);

  // Orthogonal reference: gradient passes through bit-exact.
  g << 3, 0;
  ref << 0, 2;
  CHECK(agem_project(g, ref) == g);

  // Anti-parallel reference: the projection removes everything.
  g << 1, 2;
  ref << -3, -6;
  CHECK(agem_project(g, ref).norm() == doctest::Approx(0.0));

  // Mixed case: g = (1,-1), ref = (0,1). dot = -1, so g' = g + ref = (1,0).
  g << 1, -1;
  ref << 0, 1;
  const Eigen::VectorXd projected = agem_project(g, ref);
  CHECK(projected(0) == doctest::Approx(1.0));
  CHECK(projected(1) == doctest::Approx(0.0));

  // Aligned reference: unchanged.
  g << 1, 2;
  ref << 2, 4;
  CHECK(agem_project(g, ref) == g);

  // Zero reference: unchanged.
  CHECK(agem_project(g, Eigen::VectorXd::Zero(2)) == g);

  CHECK_THROWS_AS(agem_project(g, Eigen::VectorXd::Zero(3)), ConfigError);
}

TEST_CASE("agem_project: projected gradients never conflict with the reference") {
  Rng rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(16));
    Eigen::VectorXd g(n), ref(n);
    for (int k = 0; k < n; ++k) {
      g(k) = rng.normal() * 10.0;
      ref(k) = rng.normal() * 10.0;
    }
    const Eigen::VectorXd projected = agem_project(g, ref);
    const double scale = projected.norm() * ref.norm() + 1.0;
    CHECK(projected.dot(ref) >= -1e-9 * scale);
    // Removing a conflicting component can only shrink the gradient.
    CHECK(projected.norm() <= g.norm() + 1e-12);
    // Projection is idempotent.
    CHECK((agem_project(projected, ref) - projected).norm() <=
          1e-12 * (1.0 + projected.norm()));
  }
}

TEST_CASE("reservoir buffer: fill phase stores the first items verbatim") {
  ReplayBuffer buffer(10, 77);
  for (int i = 0; i < 10; ++i) {
    buffer.observe(sample_with(i, static_cast<float>(i) * 0.5f));
  }
  REQUIRE(buffer.slots().size() == 10);
  CHECK(buffer.seen_count() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(buffer.slots()[static_cast<std::size_t>(i)].condition == i);
    CHECK(buffer.slots()[static_cast<std::size_t>(i)].target(0) ==
          static_cast<float>(i) * 0.5f);
  }

  // Past capacity the size is pinned and contents stay a subset of the
  // stream.
  for (int i = 10; i < 100; ++i) buffer.observe(sample_with(i, 0.0f));
  CHECK(buffer.slots().size() == 10);
  CHECK(buffer.seen_count() == 100);
  for (const ReplaySample& s : buffer.slots()) {
    CHECK(s.condition >= 0);
    CHECK(s.condition < 100);
  }
}

TEST_CASE("reservoir buffer: zero capacity cannot observe") {
  ReplayBuffer buffer(0, 1);
  CHECK_THROWS_AS(buffer.observe(sample_with(0, 0.0f)), InvariantError);
}

TEST_CASE("sample_replay_batch: uniform draws from stored slots") {
  ReplayBuffer buffer(4, 3);
  for (int i = 0; i < 4; ++i) buffer.observe(sample_with(i + 10, 1.0f));
  Rng rng(5);
  const auto samples = sample_replay_batch(buffer, 9, rng);
  REQUIRE(samples.size() == 9);
  for (const ReplaySample& s : samples) {
    CHECK(s.condition >= 10);
    CHECK(s.condition < 14);
  }
  // Same rng state, same draws.
  Rng replay_rng(5);
  const auto again = sample_replay_batch(buffer, 9, replay_rng);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    CHECK(again[k].condition == samples[k].condition);
  }

  const ReplayBuffer empty(4, 3);
  CHECK_THROWS_AS(sample_replay_batch(empty, 1, rng), InvariantError);
  CHECK(sample_replay_batch(empty, 0, rng).empty());
}

TEST_CASE("draw_batch: shape, determinism, validation") {
  const TaskData data = synthetic_task({0, 1}, 16, kShape, 31);
  Rng rng(8);
  const Batch batch = draw_batch(data, 5, rng);
  CHECK(batch.images.rows() == kShape.pixel_count());
  CHECK(batch.images.cols() == 5);
  CHECK(batch.conditions.size() == 5);
  for (int c : batch.conditions) CHECK((c == 0 || c == 1));

  Rng rng2(8);
  const Batch repeat = draw_batch(data, 5, rng2);
  CHECK(repeat.images == batch.images);
  CHECK(repeat.conditions == batch.conditions);

  CHECK_THROWS_AS(draw_batch(data, 0, rng), ConfigError);
}

TEST_CASE("make_strategy: all twelve ids construct and echo their id") {
  for (const std::string& id : strategy_ids()) {
    std::map<std::string, double> hyperparams;
    if (id == "clora") hyperparams["lora_rank"] = 2;
    const auto strategy = make_strategy(base_config(id, hyperparams), 17);
    REQUIRE(strategy != nullptr);
    CHECK(strategy->id() == id);
  }
}

TEST_CASE("make_strategy: ncl hooks are all no-ops") {
  const auto ncl = make_strategy(base_config("ncl"), 17);
  const TaskData data = synthetic_task({0, 1}, 8, kShape, 32);
  const Batch batch = batch_for(data, 4, 9);
  const Batch composed = ncl->compose_batch(1, batch);
  CHECK(composed.images == batch.images);
  CHECK(composed.conditions == batch.conditions);

  Eigen::VectorXd grad = Eigen::VectorXd::Ones(6);
  CHECK(ncl->penalty_and_grad(*tiny_diffusion(), grad) == 0.0);
  CHECK(grad == Eigen::VectorXd::Ones(6));
  CHECK(ncl->select_model(1) == nullptr);
  CHECK(ncl->distill_teacher(2) == nullptr);
  CHECK(ncl->distill_weight() == 0.0);
  CHECK_FALSE(ncl->owns_update(2));
  CHECK_FALSE(ncl->tracks_parameter_path());
  CHECK(ncl->stored_param_count() == 0);
  auto backbone = tiny_diffusion();
  CHECK_THROWS_AS(ncl->apply_update(1, *backbone, 0, grad), InvariantError);
}

TEST_CASE("make_strategy: unknown ids and stray hyperparameters are rejected") {
  CHECK_THROWS_AS(make_strategy(base_config("dropout"), 1), ConfigError);
  CHECK_THROWS_AS(make_strategy(base_config("ncl", {{"lambda", 1.0}}), 1),
                  ConfigError);
  CHECK_THROWS_AS(make_strategy(base_config("er", {{"kd_weight", 1.0}}), 1),
                  ConfigError);
  CHECK_THROWS_AS(
      make_strategy(base_config("er", {{"buffer_capacity", 1.5}}), 1),
      ConfigError);
  CHECK_THROWS_AS(
      make_strategy(base_config("er", {{"buffer_capacity", -1.0}}), 1),
      ConfigError);
  CHECK_THROWS_AS(make_strategy(base_config("kd", {{"lambda", 1.0}}), 1),
                  ConfigError);
  CHECK_THROWS_AS(make_strategy(base_config("l2", {{"si_xi", 1.0}}), 1),
                  ConfigError);
  CHECK_NOTHROW(make_strategy(base_config("si", {{"si_xi", 0.01}}), 1));
  CHECK_THROWS_AS(make_strategy(base_config("clora", {{"lora_rank", 0.0}}), 1),
                  ConfigError);
}

TEST_CASE("l2 strategy: anchors to end-of-task parameters") {
  const double lambda = 0.5;
  const auto strategy = make_strategy(base_config("l2", {{"lambda", lambda}}), 3);
  auto backbone = tiny_diffusion(12);
  const TaskData data = synthetic_task({0, 1}, 8, kShape, 33);
  const Eigen::Index n = backbone->param_count();

  // No reference yet: inert.
  Eigen::VectorXd grad = Eigen::VectorXd::Ones(n);
  CHECK(strategy->penalty_and_grad(*backbone, grad) == 0.0);
  CHECK(grad == Eigen::VectorXd::Ones(n));

  strategy->on_task_start(1, *backbone, data);
  strategy->on_task_end(1, *backbone, data);

  // At the anchor the penalty is exactly zero and the gradient untouched.
  grad.setOnes();
  CHECK(strategy->penalty_and_grad(*backbone, grad) == 0.0);
  CHECK(grad == Eigen::VectorXd::Ones(n));

  // Away from the anchor: penalty = lambda ||d||^2, gradient += 2 lambda d.
  const Eigen::VectorXd anchor = backbone->params();
  Eigen::VectorXd displaced = anchor;
  displaced.array() += 0.1;
  backbone->set_params(displaced);
  grad.setZero();
  const double penalty = strategy->penalty_and_grad(*backbone, grad);
  CHECK(penalty ==
        doctest::Approx(lambda * 0.01 * static_cast<double>(n)).epsilon(1e-10));
  CHECK((grad.array() - 2.0 * lambda * 0.1).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("ewc and mas strategies: importance-weighted quadratic penalties") {
  for (const std::string id : {std::string("ewc"), std::string("mas")}) {
    CAPTURE(id);
    const auto strategy = make_strategy(base_config(id, {{"lambda", 2.0}}), 4);
    auto backbone = tiny_diffusion(13);
    const TaskData data = synthetic_task({0, 1}, 8, kShape, 34);
    warm_up(*backbone, data, 3, 61);
    strategy->on_task_start(1, *backbone, data);
    strategy->on_task_end(1, *backbone, data);

    const Eigen::Index n = backbone->param_count();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
    CHECK(strategy->penalty_and_grad(*backbone, grad) == 0.0);
    CHECK(grad.isZero(0.0));

    Eigen::VectorXd displacement(n);
    Rng rng(6);
    for (Eigen::Index k = 0; k < n; ++k) displacement(k) = 0.05 * rng.normal();
    backbone->set_params(backbone->params() + displacement);
    grad.setZero();
    const double penalty = strategy->penalty_and_grad(*backbone, grad);
    CHECK(penalty >= 0.0);
    CHECK(penalty > 0.0);  // some weights matter after training data passes
    // Quadratic identity: penalty = 0.5 * <penalty gradient, displacement>.
    CHECK(std::abs(penalty - 0.5 * grad.dot(displacement)) <=
          1e-9 * (1.0 + penalty));
  }
}

TEST_CASE("si strategy: tracks the parameter path only while active") {
  const auto active = make_strategy(base_config("si", {{"lambda", 1.0}}), 5);
  CHECK(active->tracks_parameter_path());
  const auto inert = make_strategy(base_config("si", {{"lambda", 0.0}}), 5);
  CHECK_FALSE(inert->tracks_parameter_path());

  // A manually driven step: importance consolidates from the path integral.
  auto backbone = tiny_diffusion(14);
  const TaskData data = synthetic_task({0, 1}, 8, kShape, 35);
  const Eigen::Index n = backbone->param_count();
  active->on_task_start(1, *backbone, data);
  const Eigen::VectorXd before = backbone->params();
  Eigen::VectorXd step = Eigen::VectorXd::Constant(n, -0.01);
  backbone->set_params(before - step);  // pretend the optimizer moved
  active->after_update(1, *backbone, Eigen::VectorXd::Ones(n), before);
  active->on_task_end(1, *backbone, data);

  // Whatever sign the consolidated importance takes, the penalty at the
  // anchor parameters is exactly zero.
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
  CHECK(active->penalty_and_grad(*backbone, grad) == 0.0);
  CHECK(grad.isZero(0.0));
}

TEST_CASE("fisher and output-importance estimates are deterministic and non-negative") {
  auto backbone = tiny_diffusion(15);
  const TaskData data = synthetic_task({0, 1}, 8, kShape, 36);
  warm_up(*backbone, data, 3, 62);
  Rng r1(3), r2(3);
  const Eigen::VectorXd fisher = estimate_fisher(*backbone, data, 2, 4, r1);
  const Eigen::VectorXd fisher_again =
      estimate_fisher(*backbone, data, 2, 4, r2);
  CHECK(fisher == fisher_again);
  CHECK(fisher.minCoeff() >= 0.0);
  CHECK(fisher.maxCoeff() > 0.0);

  Rng r3(3);
  const Eigen::VectorXd importance =
      estimate_output_importance(*backbone, data, 2, 4, r3);
  CHECK(importance.minCoeff() >= 0.0);
  CHECK(importance.maxCoeff() > 0.0);
}

TEST_CASE("er strategy: replays stored samples onto later-task batches") {
  RunConfig config = base_config("er", {{"buffer_capacity", 16.0}});
  config.replay_batch_size = 3;
  const auto strategy = make_strategy(config, 21);
  const TaskData task1 = synthetic_task({0, 1}, 8, kShape, 37, 0);
  const TaskData task2 = synthetic_task({2, 3}, 8, kShape, 38, 1);

  // First task: batches pass through untouched while the buffer fills.
  const Batch b1 = batch_for(task1, 4, 51);
  const Batch out1 = strategy->compose_batch(1, b1);
  CHECK(out1.images == b1.images);
  CHECK(out1.conditions == b1.conditions);

  // Second task: replay appends exactly replay_batch_size old samples.
  const Batch b2 = batch_for(task2, 4, 52);
  const Batch out2 = strategy->compose_batch(2, b2);
  REQUIRE(out2.images.cols() == 7);
  REQUIRE(out2.conditions.size() == 7);
  CHECK(out2.images.leftCols(4) == b2.images);
  for (int j = 0; j < 4; ++j) CHECK(out2.conditions[static_cast<std::size_t>(j)] ==
                                    b2.conditions[static_cast<std::size_t>(j)]);
  for (int j = 4; j < 7; ++j) {
    const int c = out2.conditions[static_cast<std::size_t>(j)];
    CHECK((c == 0 || c == 1));  // replay predates task 2
  }
}

TEST_CASE("er strategy: serialized state reproduces future replay draws") {
  RunConfig config = base_config("er", {{"buffer_capacity", 8.0}});
  config.replay_batch_size = 2;
  const auto strategy = make_strategy(config, 23);
  const TaskData task1 = synthetic_task({0, 1}, 8, kShape, 39, 0);
  (void)strategy->compose_batch(1, batch_for(task1, 6, 53));

  std::ostringstream out;
  strategy->save_state(out);

  const auto restored = make_strategy(config, 999);  // wrong seed on purpose
  std::istringstream in(out.str());
  restored->load_state(in, *tiny_diffusion());

  const TaskData task2 = synthetic_task({2, 3}, 8, kShape, 40, 1);
  const Batch probe = batch_for(task2, 3, 54);
  const Batch a = strategy->compose_batch(2, probe);
  const Batch b = restored->compose_batch(2, probe);
  CHECK(a.images == b.images);
  CHECK(a.conditions == b.conditions);
}

TEST_CASE("gr strategy: synthesizes replay with the frozen generator") {
  RunConfig config = base_config("gr");
  config.replay_batch_size = 2;
  const auto strategy = make_strategy(config, 25);
  auto backbone = tiny_diffusion(16);
  const TaskData task1 = synthetic_task({0, 1}, 8, kShape, 41, 0);
  const TaskData task2 = synthetic_task({2, 3}, 8, kShape, 42, 1);

  strategy->on_task_start(1, *backbone, task1);
  const Batch b1 = batch_for(task1, 4, 55);
  const Batch out1 = strategy->compose_batch(1, b1);
  CHECK(out1.images == b1.images);
  strategy->on_task_end(1, *backbone, task1);

  strategy->on_task_start(2, *backbone, task2);
  const Batch b2 = batch_for(task2, 4, 56);
  const Batch out2 = strategy->compose_batch(2, b2);
  REQUIRE(out2.images.cols() == 6);
  CHECK(out2.images.leftCols(4) == b2.images);
  for (int j = 4; j < 6; ++j) {
    const int c = out2.conditions[static_cast<std::size_t>(j)];
    CHECK((c == 0 || c == 1));  // only classes seen before task 2
  }
  // Synthetic pixels come from the sampler, which clamps to image range.
  CHECK(out2.images.rightCols(2).minCoeff() >= -1.0);
  CHECK(out2.images.rightCols(2).maxCoeff() <= 1.0);
}

TEST_CASE("kd strategy: freezes a teacher from the second task on") {
  const auto strategy = make_strategy(base_config("kd", {{"kd_weight", 0.7}}), 27);
  CHECK(strategy->distill_weight() == 0.7);
  auto backbone = tiny_diffusion(17);
  const TaskData task1 = synthetic_task({0, 1}, 8, kShape, 43, 0);

  strategy->on_task_start(1, *backbone, task1);
  CHECK(strategy->distill_teacher(1) == nullptr);

  strategy->on_task_start(2, *backbone, task1);
  const GenerativeBackbone* teacher = strategy->distill_teacher(2);
  REQUIRE(teacher != nullptr);
  CHECK(teacher->params() == backbone->params());

  // The teacher is a frozen copy, not a live alias.
  Eigen::VectorXd moved = backbone->params();
  moved.array() += 0.1;
  backbone->set_params(moved);
  CHECK(teacher->params() != backbone->params());
}

TEST_CASE("ensemble strategy: one frozen model per task") {
  const auto strategy = make_strategy(base_config("ensemble"), 29);
  auto backbone = tiny_diffusion(18);
  const TaskData task1 = synthetic_task({0, 1}, 8, kShape, 44, 0);
  const TaskData task2 = synthetic_task({2, 3}, 8, kShape, 45, 1);

  CHECK_THROWS_AS(strategy->select_model(1), ConfigError);

  strategy->on_task_start(1, *backbone, task1);
  const Eigen::VectorXd params1 = backbone->params();
  strategy->on_task_end(1, *backbone, task1);
  CHECK(strategy->select_model(1)->params() == params1);

  // A new task restarts from a fresh initialization.
  strategy->on_task_start(2, *backbone, task2);
  CHECK(backbone->params() != params1);
  strategy->on_task_end(2, *backbone, task2);
  CHECK(strategy->select_model(2)->params() == backbone->params());
  CHECK(strategy->select_model(1)->params() == params1);
  CHECK(strategy->stored_param_count() == 2 * backbone->param_count());
  CHECK_THROWS_AS(strategy->select_model(3), ConfigError);

  // Snapshots survive serialization.
  std::ostringstream out;
  strategy->save_state(out);
  const auto restored = make_strategy(base_config("ensemble"), 999);
  std::istringstream in(out.str());
  restored->load_state(in, *backbone);
  CHECK(restored->select_model(1)->params() == params1);
  CHECK(restored->select_model(2)->params() ==
        strategy->select_model(2)->params());
}

TEST_CASE("agem strategy: buffer feeds the reference gradient, not the batch") {
  RunConfig config = base_config("agem", {{"buffer_capacity", 32.0}});
  config.replay_batch_size = 4;
  const auto strategy = make_strategy(config, 31);
  auto backbone = tiny_diffusion(19);
  const TaskData task1 = synthetic_task({0, 1}, 8, kShape, 46, 0);
  const TaskData task2 = synthetic_task({2, 3}, 8, kShape, 47, 1);

  // Batches are never augmented, even when the buffer has content.
  const Batch b1 = batch_for(task1, 4, 57);
  CHECK(strategy->compose_batch(1, b1).images == b1.images);
  const Batch b2 = batch_for(task2, 4, 58);
  CHECK(strategy->compose_batch(2, b2).images == b2.images);

  // First-task gradients pass through bit-exact.
  const Eigen::Index n = backbone->param_count();
  Eigen::VectorXd grad(n);
  Rng rng(9);
  for (Eigen::Index k = 0; k < n; ++k) grad(k) = rng.normal();
  const Eigen::VectorXd original = grad;
  strategy->transform_gradient(1, *backbone, 0, b1, grad);
  CHECK(grad == original);

  // Later tasks may project; the norm never grows and repeated projection
  // against the same state is stable.
  strategy->transform_gradient(2, *backbone, 0, b2, grad);
  CHECK(grad.norm() <= original.norm() + 1e-12);
  CHECK(grad.allFinite());
}

TEST_CASE("clora strategy: adapters start as an exact identity") {
  const auto strategy = make_strategy(base_config("clora", {{"lora_rank", 2.0}}), 33);
  auto backbone = tiny_diffusion(20);
  const TaskData task1 = synthetic_task({0, 1}, 8, kShape, 48, 0);
  const TaskData task2 = synthetic_task({2, 3}, 8, kShape, 49, 1);

  CHECK_FALSE(strategy->owns_update(1));
  CHECK(strategy->owns_update(2));

  strategy->on_task_start(1, *backbone, task1);
  strategy->on_task_end(1, *backbone, task1);
  const Eigen::VectorXd base = backbone->params();

  // Fresh adapters leave the effective weights bit-identical to the base.
  strategy->on_task_start(2, *backbone, task2);
  CHECK(backbone->params() == base);
  CHECK(strategy->stored_param_count() > backbone->param_count());

  // Adapter updates move matrix weights only; vector parameters are frozen.
  Eigen::VectorXd grad = Eigen::VectorXd::Ones(backbone->param_count());
  strategy->apply_update(2, *backbone, 0, grad);
  const Eigen::VectorXd after = backbone->params();
  CHECK(after != base);
  for (const nn::ParamEntry& entry : backbone->param_entries()) {
    if (entry.rows >= 2 && entry.cols >= 2) continue;
    CHECK(after.segment(entry.offset, entry.rows * entry.cols) ==
          base.segment(entry.offset, entry.rows * entry.cols));
  }

  strategy->on_task_end(2, *backbone, task2);
  CHECK(strategy->select_model(1)->params() == base);
  CHECK(strategy->select_model(2)->params() == backbone->params());
  CHECK_THROWS_AS(strategy->select_model(3), ConfigError);
}

TEST_CASE("clora strategy: oversized rank is rejected at adapter attach") {
  const auto strategy = make_strategy(base_config("clora", {{"lora_rank", 64.0}}), 35);
  auto backbone = tiny_diffusion(22);
  const TaskData task1 = synthetic_task({0, 1}, 8, kShape, 50, 0);
  strategy->on_task_start(1, *backbone, task1);
  strategy->on_task_end(1, *backbone, task1);
  CHECK_THROWS_AS(strategy->on_task_start(2, *backbone, task1), ConfigError);
}

TEST_CASE("clora strategy: serialized state restores the base and snapshots") {
  const auto strategy = make_strategy(base_config("clora", {{"lora_rank", 2.0}}), 37);
  auto backbone = tiny_diffusion(24);
  const TaskData task1 = synthetic_task({0, 1}, 8, kShape, 51, 0);
  strategy->on_task_start(1, *backbone, task1);
  strategy->on_task_end(1, *backbone, task1);

  std::ostringstream out;
  strategy->save_state(out);
  const auto restored = make_strategy(base_config("clora", {{"lora_rank", 2.0}}), 999);
  std::istringstream in(out.str());
  restored->load_state(in, *backbone);
  CHECK(restored->select_model(1)->params() == strategy->select_model(1)->params());

  // Both continue into task 2 from the same base.
  auto twin = backbone->clone();
  strategy->on_task_start(2, *backbone, task1);
  restored->on_task_start(2, *twin, task1);
  CHECK(backbone->params() == twin->params());
}

TEST_CASE("quadratic strategy state round trips through a stream") {
  const auto strategy = make_strategy(base_config("l2", {{"lambda", 1.5}}), 39);
  auto backbone = tiny_diffusion(26);
  const TaskData task1 = synthetic_task({0, 1}, 8, kShape, 52, 0);
  strategy->on_task_start(1, *backbone, task1);
  strategy->on_task_end(1, *backbone, task1);

  std::ostringstream out;
  strategy->save_state(out);
  const auto restored = make_strategy(base_config("l2", {{"lambda", 1.5}}), 999);
  std::istringstream in(out.str());
  restored->load_state(in, *backbone);

  Eigen::VectorXd displaced = backbone->params();
  displaced.array() += 0.05;
  backbone->set_params(displaced);
  Eigen::VectorXd g1 = Eigen::VectorXd::Zero(backbone->param_count());
  Eigen::VectorXd g2 = Eigen::VectorXd::Zero(backbone->param_count());
  CHECK(strategy->penalty_and_grad(*backbone, g1) ==
        restored->penalty_and_grad(*backbone, g2));
  CHECK(g1 == g2);
}

TEST_CASE("hook neutrality: inert strategies train bit-identically to ncl") {
  // Neutralized hooks must not perturb the training trajectory: zero replay
  // for the rehearsal family, zero weight for the penalty and distillation
  // family. Every strategy consumes randomness only from its private stream.
  const auto run_two_tasks = [](const RunConfig& config) {
    auto backbone = tiny_diffusion(28);
    const auto strategy = make_strategy(config, 77);
    Rng train_rng(4242);
    const QualityProbe probe = [](const GenerativeBackbone&, int) {
      return std::nan("");  // never restore, keep the raw final parameters
    };
    const TaskData task1 = synthetic_task({0, 1}, 10, kShape, 53, 0);
    const TaskData task2 = synthetic_task({2, 3}, 10, kShape, 54, 1);
    strategy->on_task_start(1, *backbone, task1);
    train_task(*backbone, *strategy, 1, task1, config, train_rng, probe);
    strategy->on_task_end(1, *backbone, task1);
    strategy->on_task_start(2, *backbone, task2);
    train_task(*backbone, *strategy, 2, task2, config, train_rng, probe);
    strategy->on_task_end(2, *backbone, task2);
    return backbone->params();
  };

  const Eigen::VectorXd reference = run_two_tasks(base_config("ncl"));
  // Training moved the parameters; the comparison below is not vacuous.
  CHECK(reference != tiny_diffusion(28)->params());

  const std::vector<RunConfig> variants = {
      base_config("er"),
      base_config("gr"),
      base_config("agem"),
      base_config("kd", {{"kd_weight", 0.0}}),
      base_config("l2", {{"lambda", 0.0}}),
      base_config("ewc", {{"lambda", 0.0}}),
      base_config("si", {{"lambda", 0.0}}),
      base_config("mas", {{"lambda", 0.0}}),
  };
  for (const RunConfig& config : variants) {
    CAPTURE(config.strategy_id);
    CHECK(run_two_tasks(config) == reference);
  }
}

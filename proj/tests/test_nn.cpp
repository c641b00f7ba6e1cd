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
#include <functional>
#include <sstream>

#include "clog/nn/params.hpp"
#include "clog/nn/tape.hpp"
#include "clog/rng.hpp"
#include "test_util.hpp"

using namespace clog;
using clog_test::GraphFn;
using clog_test::max_fd_error;
using clog_test::random_mat;
using nn::Tape;
using nn::Var;

namespace {

void check_gradient(const GraphFn& graph, Eigen::MatrixXd p,
                    double tol = 1e-6) {
  CHECK(max_fd_error(graph, std::move(p)) <= tol);
}

Eigen::MatrixXd mat_from(std::initializer_list<double> values,
                         Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  Eigen::Index k = 0;
  for (double v : values) {
    m(k % rows, k / rows) = v;
    ++k;
  }
  return m;
}

}  // namespace

TEST_CASE("tape: exact gradients of linear ops") {
  Tape tp;
  const Var a = tp.leaf(mat_from({1, 2, 3, 4}, 2, 2));
  const Var b = tp.leaf(mat_from({5, 6, 7, 8}, 2, 2));
  const Var root = nn::sum_all(tp, nn::add(tp, nn::scale(tp, a, 3.0), b));
  CHECK(tp.value(root)(0, 0) == doctest::Approx(3 * 10 + 26));
  tp.backward(root);
  CHECK(tp.grad(a).isApprox(Eigen::MatrixXd::Constant(2, 2, 3.0)));
  CHECK(tp.grad(b).isApprox(Eigen::MatrixXd::Constant(2, 2, 1.0)));
}

TEST_CASE("tape: constants receive no gradient, unreached leaves are zero") {
  Tape tp;
  const Var a = tp.leaf(mat_from({1, 2}, 2, 1));
  const Var c = tp.constant(mat_from({3, 4}, 2, 1));
  const Var unused = tp.leaf(mat_from({9}, 1, 1));
  const Var root = nn::sum_all(tp, nn::cmul(tp, a, c));
  tp.backward(root);
  CHECK(tp.grad(a).isApprox(mat_from({3, 4}, 2, 1)));
  CHECK_FALSE(tp.grad_defined(c));
  CHECK(tp.grad(unused).isZero());
}

TEST_CASE("tape: finite differences for elementwise and reduce ops") {
  const Eigen::MatrixXd p = mat_from({0.5, -1.2, 2.0, -0.4, 1.7, 0.3}, 2, 3);
  check_gradient(
      [](Tape& tp, Var x) { return nn::mean_all(tp, nn::silu(tp, x)); }, p);
  check_gradient(
      [](Tape& tp, Var x) { return nn::sum_all(tp, nn::tanh_op(tp, x)); }, p);
  check_gradient(
      [](Tape& tp, Var x) { return nn::mean_all(tp, nn::softplus(tp, x)); },
      p);
  check_gradient(
      [](Tape& tp, Var x) {
        return nn::sum_all(tp, nn::leaky_relu(tp, x, 0.2));
      },
      p);
  check_gradient([](Tape& tp, Var x) { return nn::mean_sq(tp, x); }, p);
  check_gradient(
      [](Tape& tp, Var x) {
        return nn::mse(tp, x, Eigen::MatrixXd::Constant(2, 3, 0.7));
      },
      p);
  check_gradient(
      [](Tape& tp, Var x) {
        const Var y = nn::cmul(tp, x, x);
        return nn::sum_all(tp, nn::sub(tp, y, x));
      },
      p);
}

TEST_CASE("tape: softplus is stable far from zero") {
  Tape tp;
  const Var x = tp.leaf(mat_from({800.0, -800.0}, 2, 1));
  const Var y = nn::softplus(tp, x);
  CHECK(tp.value(y)(0, 0) == doctest::Approx(800.0));
  CHECK(tp.value(y)(1, 0) == doctest::Approx(0.0));
  tp.backward(nn::sum_all(tp, y));
  CHECK(tp.grad(x)(0, 0) == doctest::Approx(1.0));
  CHECK(tp.grad(x)(1, 0) == doctest::Approx(0.0));
  CHECK(std::isfinite(tp.value(y)(0, 0)));
}

TEST_CASE("tape: finite differences for matmul, affine, row_dot, concat") {
  const Eigen::MatrixXd x_const = random_mat(3, 4, 11);
  check_gradient(
      [&](Tape& tp, Var w) {
        return nn::mean_sq(tp, nn::matmul(tp, w, tp.constant(x_const)));
      },
      random_mat(2, 3, 12));
  check_gradient(
      [&](Tape& tp, Var x) {
        return nn::mean_sq(tp, nn::matmul(tp, tp.constant(random_mat(2, 3, 13)), x));
      },
      random_mat(3, 4, 14));
  check_gradient(
      [&](Tape& tp, Var w) {
        const Var b = tp.constant(random_mat(2, 1, 15));
        return nn::mean_sq(tp, nn::affine(tp, w, tp.constant(x_const), b));
      },
      random_mat(2, 3, 16));
  check_gradient(
      [&](Tape& tp, Var b) {
        const Var w = tp.constant(random_mat(2, 3, 17));
        return nn::mean_sq(tp, nn::affine(tp, w, tp.constant(x_const), b));
      },
      random_mat(2, 1, 18));
  check_gradient(
      [](Tape& tp, Var a) {
        return nn::sum_all(tp, nn::row_dot(tp, a, a));
      },
      random_mat(3, 2, 19));
  check_gradient(
      [&](Tape& tp, Var a) {
        const Var c = tp.constant(random_mat(3, 4, 20));
        return nn::mean_sq(tp, nn::concat_rows(tp, a, c));
      },
      random_mat(2, 4, 21));
}

TEST_CASE("tape: embed gathers columns and accumulates repeated ids") {
  Tape tp;
  // Two-row table over five classes.
  const Var table = tp.leaf(random_mat(2, 5, 22));
  const std::vector<int> ids = {1, 3, 1};
  const Var picked = nn::embed(tp, table, ids);
  REQUIRE(tp.value(picked).rows() == 2);
  REQUIRE(tp.value(picked).cols() == 3);
  CHECK(tp.value(picked).col(0) == tp.value(table).col(1));
  CHECK(tp.value(picked).col(1) == tp.value(table).col(3));
  CHECK(tp.value(picked).col(2) == tp.value(table).col(1));
  const Var root = nn::sum_all(tp, picked);
  tp.backward(root);
  const Eigen::MatrixXd g = tp.grad(table);
  CHECK(g.col(0).isZero());
  CHECK(g.col(1).isApprox(Eigen::MatrixXd::Constant(2, 1, 2.0)));
  CHECK(g.col(3).isApprox(Eigen::MatrixXd::Constant(2, 1, 1.0)));

  check_gradient(
      [&](Tape& tp2, Var t) {
        return nn::mean_sq(tp2, nn::embed(tp2, t, {0, 2, 2, 4}));
      },
      random_mat(3, 5, 23));
}

TEST_CASE("conv2d: hand oracle on a 1x1 image isolates the kernel center") {
  const ImageShape shape{1, 1, 1};
  Tape tp;
  const Var x = tp.constant(mat_from({2.0}, 1, 1));
  Eigen::MatrixXd w_val = Eigen::MatrixXd::Zero(1, 9);
  w_val(0, 4) = 3.0;  // 3x3 kernel center at dy=dx=1
  const Var w = tp.leaf(w_val);
  const Var b = tp.leaf(mat_from({0.5}, 1, 1));
  const Var y = nn::conv2d(tp, x, w, b, shape, 1);
  CHECK(tp.value(y)(0, 0) == doctest::Approx(2.0 * 3.0 + 0.5));
}

TEST_CASE("conv2d: finite differences for weights, bias, and input") {
  const ImageShape shape{2, 4, 4};
  const Eigen::MatrixXd x_const = random_mat(2 * 4 * 4, 3, 31);
  const int out_ch = 2;
  check_gradient(
      [&](Tape& tp, Var w) {
        const Var b = tp.constant(Eigen::MatrixXd::Zero(out_ch, 1));
        return nn::mean_sq(
            tp, nn::conv2d(tp, tp.constant(x_const), w, b, shape, out_ch));
      },
      random_mat(out_ch, 2 * 9, 32));
  check_gradient(
      [&](Tape& tp, Var b) {
        const Var w = tp.constant(random_mat(out_ch, 2 * 9, 33));
        return nn::mean_sq(
            tp, nn::conv2d(tp, tp.constant(x_const), w, b, shape, out_ch));
      },
      random_mat(out_ch, 1, 34));
  check_gradient(
      [&](Tape& tp, Var x) {
        const Var w = tp.constant(random_mat(out_ch, 2 * 9, 35));
        const Var b = tp.constant(random_mat(out_ch, 1, 36));
        return nn::mean_sq(tp, nn::conv2d(tp, x, w, b, shape, out_ch));
      },
      random_mat(2 * 4 * 4, 2, 37));
}

TEST_CASE("conv2d_forward matches the tape op") {
  const ImageShape shape{2, 4, 4};
  const Eigen::MatrixXd x = random_mat(2 * 4 * 4, 3, 41);
  const Eigen::MatrixXd w = random_mat(3, 2 * 9, 42);
  const Eigen::VectorXd b = random_mat(3, 1, 43);
  Tape tp;
  const Var y =
      nn::conv2d(tp, tp.constant(x), tp.constant(w), tp.constant(b), shape, 3);
  const Eigen::MatrixXd direct = nn::conv2d_forward(x, w, b, shape, 3);
  CHECK(tp.value(y).isApprox(direct, 1e-12));
}

TEST_CASE("avg_pool2: exact values, forward helper, gradient") {
  const ImageShape shape{1, 2, 2};
  Eigen::MatrixXd x(4, 1);
  x << 1.0, 2.0, 3.0, 4.0;  // row-major 2x2 plane
  Tape tp;
  const Var y = nn::avg_pool2(tp, tp.leaf(x), shape);
  REQUIRE(tp.value(y).rows() == 1);
  CHECK(tp.value(y)(0, 0) == doctest::Approx(2.5));
  CHECK(nn::avg_pool2_forward(x, shape)(0, 0) == doctest::Approx(2.5));

  check_gradient(
      [](Tape& tp2, Var in) {
        return nn::mean_sq(tp2, nn::avg_pool2(tp2, in, ImageShape{2, 4, 4}));
      },
      random_mat(2 * 4 * 4, 2, 44));
}

TEST_CASE("upsample2: nearest-neighbor values and gradient") {
  const ImageShape shape{1, 1, 2};
  Eigen::MatrixXd x(2, 1);
  x << 5.0, 7.0;
  Tape tp;
  const Var y = nn::upsample2(tp, tp.leaf(x), shape);
  REQUIRE(tp.value(y).rows() == 8);  // 2x4 plane
  const Eigen::MatrixXd v = tp.value(y);
  // Row-major 2x4: both rows are 5 5 7 7.
  for (int r = 0; r < 2; ++r) {
    CHECK(v(r * 4 + 0, 0) == 5.0);
    CHECK(v(r * 4 + 1, 0) == 5.0);
    CHECK(v(r * 4 + 2, 0) == 7.0);
    CHECK(v(r * 4 + 3, 0) == 7.0);
  }
  check_gradient(
      [](Tape& tp2, Var in) {
        return nn::mean_sq(tp2, nn::upsample2(tp2, in, ImageShape{2, 2, 2}));
      },
      random_mat(2 * 2 * 2, 3, 45));
}

TEST_CASE("channel_bias broadcasts per channel and differentiates") {
  const ImageShape shape{2, 2, 2};
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(8, 1);
  Eigen::MatrixXd bias(2, 1);
  bias << 1.0, -2.0;
  Tape tp;
  const Var y = nn::channel_bias(tp, tp.constant(x), tp.leaf(bias), shape);
  const Eigen::MatrixXd v = tp.value(y);
  for (int p = 0; p < 4; ++p) {
    CHECK(v(p, 0) == 1.0);      // channel 0 pixels
    CHECK(v(4 + p, 0) == -2.0); // channel 1 pixels
  }
  check_gradient(
      [&](Tape& tp2, Var b) {
        const Var in = tp2.constant(random_mat(8, 3, 46));
        return nn::mean_sq(tp2, nn::channel_bias(tp2, in, b, shape));
      },
      random_mat(2, 3, 47));
}

TEST_CASE("param store: offsets, views, and lookup") {
  nn::ParamStore store;
  const int a = store.add("w1", 2, 3, 0);
  const int b = store.add("b1", 4, 1, 1);
  store.finalize();
  CHECK(store.size() == 10);
  CHECK(store.entry(a).offset == 0);
  CHECK(store.entry(b).offset == 6);
  CHECK(store.entry(b).phase == 1);
  CHECK(store.find("b1") == b);
  CHECK(store.find("nope") == -1);

  for (Eigen::Index i = 0; i < 10; ++i) store.mutable_flat()(i) = double(i);
  // Column-major flattening: matrix(a)(1, 2) is flat[offset + 2*rows + 1].
  CHECK(store.matrix(a)(1, 2) == 5.0);
  CHECK(store.matrix(b)(0, 0) == 6.0);
  store.mutable_matrix(a)(0, 0) = 99.0;
  CHECK(store.flat()(0) == 99.0);
}

TEST_CASE("param store: initializers") {
  nn::ParamStore store;
  const int w = store.add("w", 50, 40, 0);
  const int z = store.add("z", 3, 3, 0);
  store.finalize();
  Rng rng(4242);
  store.init_he(w, rng, 2.0);
  store.init_zero(z);
  CHECK(store.matrix(z).isZero());
  const auto m = store.matrix(w);
  const double mean = m.mean();
  const double var = (m.array() - mean).square().sum() / (m.size() - 1);
  const double expect_std = 2.0 / std::sqrt(40.0);
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::sqrt(var) == doctest::Approx(expect_std).epsilon(0.15));
  // init_normal with zero stddev pins values at zero.
  Rng rng2(1);
  store.init_normal(z, rng2, 0.0);
  CHECK(store.matrix(z).isZero());
}

TEST_CASE("adam: converges on a quadratic") {
  Eigen::VectorXd p(1);
  p << -4.0;
  nn::Adam opt(0, 1, 0.1);
  for (int i = 0; i < 600; ++i) {
    Eigen::VectorXd g(1);
    g << 2.0 * (p(0) - 3.0);
    opt.step(p, g);
  }
  CHECK(p(0) == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("adam: first step has magnitude lr in the gradient direction") {
  Eigen::VectorXd p(2);
  p << 1.0, 1.0;
  Eigen::VectorXd g(2);
  g << 250.0, -1e-3;
  nn::Adam opt(0, 2, 0.01);
  opt.step(p, g);
  // Bias-corrected first step is lr * sign(g) up to the epsilon regulator.
  CHECK(p(0) == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
  CHECK(p(1) == doctest::Approx(1.0 + 0.01).epsilon(1e-2));
}

TEST_CASE("adam: only the owned slice moves") {
  Eigen::VectorXd p(4);
  p << 1.0, 2.0, 3.0, 4.0;
  Eigen::VectorXd g(4);
  g << 10.0, 10.0, 10.0, 10.0;
  nn::Adam opt(1, 2, 0.05);
  for (int i = 0; i < 3; ++i) opt.step(p, g);
  CHECK(p(0) == 1.0);
  CHECK(p(3) == 4.0);
  CHECK(p(1) < 2.0);
  CHECK(p(2) < 3.0);
}

TEST_CASE("adam: serialization resumes the identical trajectory") {
  Eigen::VectorXd p(3);
  p << 0.5, -0.5, 2.0;
  nn::Adam opt(0, 3, 0.02);
  Rng rng(88);
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd g(3);
    for (int k = 0; k < 3; ++k) g(k) = rng.normal();
    opt.step(p, g);
  }
  std::stringstream buf;
  opt.save(buf);
  nn::Adam copy;
  copy.load(buf);
  Eigen::VectorXd p2 = p;
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd g(3);
    for (int k = 0; k < 3; ++k) g(k) = rng.normal();
    Eigen::VectorXd g2 = g;
    opt.step(p, g);
    copy.step(p2, g2);
  }
  CHECK(p == p2);
}

TEST_CASE("adam: reset clears momentum") {
  Eigen::VectorXd p(1);
  p << 0.0;
  Eigen::VectorXd g(1);
  g << 1.0;
  nn::Adam opt(0, 1, 0.1);
  opt.step(p, g);
  opt.reset();
  Eigen::VectorXd q(1);
  q << 0.0;
  nn::Adam fresh(0, 1, 0.1);
  Eigen::VectorXd g2(1);
  g2 << 1.0;
  opt.step(p, g2);
  // After reset the second step from p behaves like a first step.
  fresh.step(q, g2);
  CHECK(p(0) == doctest::Approx(q(0) - 0.1).epsilon(1e-9));
}

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

#ifndef CLOG_NN_TAPE_HPP
#define CLOG_NN_TAPE_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "clog/dataset.hpp"

namespace clog::nn {

/// Handle to a tape node. Values are dense matrices laid out feature-major:
/// column j is sample j of the batch; image features are flattened
/// channel-major (c*H*W + y*W + x).
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Reverse-mode autodiff tape. One tape records one forward pass; backward()
/// replays it in reverse. Values and adjoints are double precision.
class Tape {
 public:
  /// Leaf with no gradient flow (inputs, constants).
  Var constant(Eigen::MatrixXd value);
  /// Leaf that accumulates a gradient (parameters, or inputs whose gradient
  /// is wanted, e.g. R1).
  Var leaf(Eigen::MatrixXd value);

  Var push(Eigen::MatrixXd value, std::function<void()> backward);

  const Eigen::MatrixXd& value(Var v) const { return values_[v.idx]; }
  /// Adjoint of v; zero matrix if the node was never reached.
  const Eigen::MatrixXd& grad(Var v);
  bool grad_defined(Var v) const { return grad_set_[v.idx]; }

  /// Seeds d(root)/d(root) = 1 and propagates. root must be 1x1.
  void backward(Var root);

  /// Accumulates g into the adjoint of v (used inside op closures).
  void accumulate(Var v, const Eigen::MatrixXd& g);

  int size() const { return static_cast<int>(values_.size()); }

 private:
  std::vector<Eigen::MatrixXd> values_;
  std::vector<Eigen::MatrixXd> grads_;
  std::vector<bool> grad_set_;
  std::vector<bool> needs_grad_;
  std::vector<std::function<void()>> backward_;
};

// ---------------------------------------------------------------------------
// Elementwise / linear ops
// ---------------------------------------------------------------------------

Var add(Tape& tp, Var a, Var b);
Var sub(Tape& tp, Var a, Var b);
Var cmul(Tape& tp, Var a, Var b);
Var scale(Tape& tp, Var a, double s);
/// W (m x k) times x (k x n).
Var matmul(Tape& tp, Var w, Var x);
/// W x + b, b broadcast across columns (b is m x 1).
Var affine(Tape& tp, Var w, Var x, Var b);
/// Vertical stack [a; b].
Var concat_rows(Tape& tp, Var a, Var b);
/// Column gather from an (m x num_classes) table.
Var embed(Tape& tp, Var table, const std::vector<int>& ids);
/// Per-column dot product of equal-shape a, b -> 1 x n.
Var row_dot(Tape& tp, Var a, Var b);

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Var silu(Tape& tp, Var x);
Var leaky_relu(Tape& tp, Var x, double slope);
Var tanh_op(Tape& tp, Var x);
/// Numerically stable log(1 + exp(x)).
Var softplus(Tape& tp, Var x);

// ---------------------------------------------------------------------------
// Spatial ops. `shape` describes the INPUT geometry of x.
// ---------------------------------------------------------------------------

/// 3x3 stride-1 same-padding convolution; w is (out_ch x in_ch*9), b out_ch.
Var conv2d(Tape& tp, Var x, Var w, Var b, const ImageShape& shape, int out_ch);
/// 2x2 average pooling, stride 2; height/width must be even.
Var avg_pool2(Tape& tp, Var x, const ImageShape& shape);
/// Nearest-neighbor 2x upsampling.
Var upsample2(Tape& tp, Var x, const ImageShape& shape);
/// Adds a per-sample per-channel bias (bias is channels x n), broadcast over
/// the spatial extent.
Var channel_bias(Tape& tp, Var x, Var bias, const ImageShape& shape);

// ---------------------------------------------------------------------------
// Reductions (1x1 outputs)
// ---------------------------------------------------------------------------

Var sum_all(Tape& tp, Var x);
Var mean_all(Tape& tp, Var x);
/// mean((x - target)^2) over all entries.
Var mse(Tape& tp, Var x, const Eigen::MatrixXd& target);
/// mean(x^2) over all entries.
Var mean_sq(Tape& tp, Var x);

// ---------------------------------------------------------------------------
// Tape-free forward helpers shared with inference-only paths
// ---------------------------------------------------------------------------

/// im2col for 3x3 stride-1 pad-1 convolution: (in_ch*9) x (H*W*n) patches.
Eigen::MatrixXd im2col3x3(const Eigen::MatrixXd& x, const ImageShape& shape);
/// Inverse scatter-add of im2col3x3.
void col2im3x3_add(const Eigen::MatrixXd& patches, const ImageShape& shape,
                   Eigen::MatrixXd& x_grad);
/// Plain forward convolution used by fixed (non-trained) networks.
Eigen::MatrixXd conv2d_forward(const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& w,
                               const Eigen::VectorXd& b,
                               const ImageShape& shape, int out_ch);
Eigen::MatrixXd avg_pool2_forward(const Eigen::MatrixXd& x,
                                  const ImageShape& shape);

}  // namespace clog::nn

#endif  // CLOG_NN_TAPE_HPP

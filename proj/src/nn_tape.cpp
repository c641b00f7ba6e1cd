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

#include "clog/nn/tape.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "clog/errors.hpp"

namespace clog::nn {

Var Tape::constant(Eigen::MatrixXd value) {
  values_.push_back(std::move(value));
  grads_.emplace_back();
  grad_set_.push_back(false);
  needs_grad_.push_back(false);
  backward_.push_back(nullptr);
  return Var{static_cast<int>(values_.size()) - 1};
}

Var Tape::leaf(Eigen::MatrixXd value) {
  Var v = constant(std::move(value));
  needs_grad_[v.idx] = true;
  return v;
}

Var Tape::push(Eigen::MatrixXd value, std::function<void()> backward) {
  values_.push_back(std::move(value));
  grads_.emplace_back();
  grad_set_.push_back(false);
  needs_grad_.push_back(true);
  backward_.push_back(std::move(backward));
  return Var{static_cast<int>(values_.size()) - 1};
}

const Eigen::MatrixXd& Tape::grad(Var v) {
  if (!grad_set_[v.idx]) {
    grads_[v.idx] = Eigen::MatrixXd::Zero(values_[v.idx].rows(),
                                          values_[v.idx].cols());
    grad_set_[v.idx] = true;
  }
  return grads_[v.idx];
}

void Tape::accumulate(Var v, const Eigen::MatrixXd& g) {
  if (!needs_grad_[v.idx]) return;
  if (!grad_set_[v.idx]) {
    grads_[v.idx] = g;
    grad_set_[v.idx] = true;
  } else {
    grads_[v.idx] += g;
  }
}

void Tape::backward(Var root) {
  check_invariant(values_[root.idx].rows() == 1 &&
                      values_[root.idx].cols() == 1,
                  "backward root must be scalar");
  accumulate(root, Eigen::MatrixXd::Ones(1, 1));
  for (int i = root.idx; i >= 0; --i) {
    if (grad_set_[i] && backward_[i]) backward_[i]();
  }
}

// ---------------------------------------------------------------------------
// Elementwise / linear
// ---------------------------------------------------------------------------

Var add(Tape& tp, Var a, Var b) {
  Eigen::MatrixXd value = tp.value(a) + tp.value(b);
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, a, b, out] {
    tp.accumulate(a, tp.grad(out));
    tp.accumulate(b, tp.grad(out));
  });
}

Var sub(Tape& tp, Var a, Var b) {
  Eigen::MatrixXd value = tp.value(a) - tp.value(b);
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, a, b, out] {
    tp.accumulate(a, tp.grad(out));
    tp.accumulate(b, -tp.grad(out));
  });
}

Var cmul(Tape& tp, Var a, Var b) {
  Eigen::MatrixXd value = tp.value(a).cwiseProduct(tp.value(b));
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, a, b, out] {
    tp.accumulate(a, tp.grad(out).cwiseProduct(tp.value(b)));
    tp.accumulate(b, tp.grad(out).cwiseProduct(tp.value(a)));
  });
}

Var scale(Tape& tp, Var a, double s) {
  Eigen::MatrixXd value = s * tp.value(a);
  Var out{tp.size()};
  return tp.push(std::move(value),
                 [&tp, a, s, out] { tp.accumulate(a, s * tp.grad(out)); });
}

Var matmul(Tape& tp, Var w, Var x) {
  Eigen::MatrixXd value = tp.value(w) * tp.value(x);
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, w, x, out] {
    tp.accumulate(w, tp.grad(out) * tp.value(x).transpose());
    tp.accumulate(x, tp.value(w).transpose() * tp.grad(out));
  });
}

Var affine(Tape& tp, Var w, Var x, Var b) {
  check_invariant(tp.value(b).cols() == 1, "affine bias must be a column");
  Eigen::MatrixXd value =
      (tp.value(w) * tp.value(x)).colwise() + tp.value(b).col(0);
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, w, x, b, out] {
    const Eigen::MatrixXd& g = tp.grad(out);
    tp.accumulate(w, g * tp.value(x).transpose());
    tp.accumulate(x, tp.value(w).transpose() * g);
    tp.accumulate(b, g.rowwise().sum());
  });
}

Var concat_rows(Tape& tp, Var a, Var b) {
  const auto& va = tp.value(a);
  const auto& vb = tp.value(b);
  check_invariant(va.cols() == vb.cols(), "concat_rows column mismatch");
  Eigen::MatrixXd value(va.rows() + vb.rows(), va.cols());
  value.topRows(va.rows()) = va;
  value.bottomRows(vb.rows()) = vb;
  const Eigen::Index ra = va.rows();
  const Eigen::Index rb = vb.rows();
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, a, b, ra, rb, out] {
    tp.accumulate(a, tp.grad(out).topRows(ra));
    tp.accumulate(b, tp.grad(out).bottomRows(rb));
  });
}

Var embed(Tape& tp, Var table, const std::vector<int>& ids) {
  const auto& t = tp.value(table);
  Eigen::MatrixXd value(t.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    check_invariant(ids[j] >= 0 && ids[j] < t.cols(),
                    "embedding id out of range");
    value.col(static_cast<Eigen::Index>(j)) = t.col(ids[j]);
  }
  Var out{tp.size()};
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return tp.push(std::move(value), [&tp, table, ids_copy, out] {
    const Eigen::MatrixXd& g = tp.grad(out);
    Eigen::MatrixXd gt =
        Eigen::MatrixXd::Zero(tp.value(table).rows(), tp.value(table).cols());
    for (std::size_t j = 0; j < ids_copy->size(); ++j) {
      gt.col((*ids_copy)[j]) += g.col(static_cast<Eigen::Index>(j));
    }
    tp.accumulate(table, gt);
  });
}

Var row_dot(Tape& tp, Var a, Var b) {
  Eigen::MatrixXd value =
      tp.value(a).cwiseProduct(tp.value(b)).colwise().sum();
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, a, b, out] {
    const Eigen::MatrixXd& g = tp.grad(out);  // 1 x n
    tp.accumulate(a, tp.value(b).array().rowwise() * g.row(0).array());
    tp.accumulate(b, tp.value(a).array().rowwise() * g.row(0).array());
  });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

namespace {

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Var silu(Tape& tp, Var x) {
  Eigen::MatrixXd s = tp.value(x).unaryExpr([](double v) { return sigmoid(v); });
  Eigen::MatrixXd value = tp.value(x).cwiseProduct(s);
  Var out{tp.size()};
  auto s_keep = std::make_shared<Eigen::MatrixXd>(std::move(s));
  return tp.push(std::move(value), [&tp, x, s_keep, out] {
    const auto& s_mat = *s_keep;
    Eigen::MatrixXd d =
        s_mat.array() *
        (1.0 + tp.value(x).array() * (1.0 - s_mat.array()));
    tp.accumulate(x, tp.grad(out).cwiseProduct(d));
  });
}

Var leaky_relu(Tape& tp, Var x, double slope) {
  Eigen::MatrixXd value = tp.value(x).unaryExpr(
      [slope](double v) { return v > 0 ? v : slope * v; });
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, x, slope, out] {
    Eigen::MatrixXd d = tp.value(x).unaryExpr(
        [slope](double v) { return v > 0 ? 1.0 : slope; });
    tp.accumulate(x, tp.grad(out).cwiseProduct(d));
  });
}

Var tanh_op(Tape& tp, Var x) {
  Eigen::MatrixXd value = tp.value(x).array().tanh();
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, x, out] {
    Eigen::MatrixXd d = 1.0 - tp.value(out).array().square();
    tp.accumulate(x, tp.grad(out).cwiseProduct(d));
  });
}

Var softplus(Tape& tp, Var x) {
  Eigen::MatrixXd value = tp.value(x).unaryExpr([](double v) {
    return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  });
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, x, out] {
    Eigen::MatrixXd d = tp.value(x).unaryExpr([](double v) { return sigmoid(v); });
    tp.accumulate(x, tp.grad(out).cwiseProduct(d));
  });
}

// ---------------------------------------------------------------------------
// Spatial ops
// ---------------------------------------------------------------------------

Eigen::MatrixXd im2col3x3(const Eigen::MatrixXd& x, const ImageShape& shape) {
  const int C = shape.channels, H = shape.height, W = shape.width;
  const Eigen::Index n = x.cols();
  const int hw = H * W;
  Eigen::MatrixXd patches(static_cast<Eigen::Index>(C) * 9,
                          static_cast<Eigen::Index>(hw) * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) {
        const Eigen::Index col = j * hw + y * W + xx;
        for (int c = 0; c < C; ++c) {
          for (int dy = 0; dy < 3; ++dy) {
            const int sy = y + dy - 1;
            for (int dx = 0; dx < 3; ++dx) {
              const int sx = xx + dx - 1;
              const double v =
                  (sy >= 0 && sy < H && sx >= 0 && sx < W)
                      ? x(static_cast<Eigen::Index>(c) * hw + sy * W + sx, j)
                      : 0.0;
              patches(static_cast<Eigen::Index>(c) * 9 + dy * 3 + dx, col) = v;
            }
          }
        }
      }
    }
  }
  return patches;
}

void col2im3x3_add(const Eigen::MatrixXd& patches, const ImageShape& shape,
                   Eigen::MatrixXd& x_grad) {
  const int C = shape.channels, H = shape.height, W = shape.width;
  const int hw = H * W;
  const Eigen::Index n = x_grad.cols();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) {
        const Eigen::Index col = j * hw + y * W + xx;
        for (int c = 0; c < C; ++c) {
          for (int dy = 0; dy < 3; ++dy) {
            const int sy = y + dy - 1;
            if (sy < 0 || sy >= H) continue;
            for (int dx = 0; dx < 3; ++dx) {
              const int sx = xx + dx - 1;
              if (sx < 0 || sx >= W) continue;
              x_grad(static_cast<Eigen::Index>(c) * hw + sy * W + sx, j) +=
                  patches(static_cast<Eigen::Index>(c) * 9 + dy * 3 + dx, col);
            }
          }
        }
      }
    }
  }
}

namespace {

/// (out_ch x hw*n) -> (out_ch*hw x n) reorder.
Eigen::MatrixXd regroup_to_batch(const Eigen::MatrixXd& wide, int out_ch,
                                 int hw, Eigen::Index n) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(out_ch) * hw, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int c = 0; c < out_ch; ++c) {
      for (int p = 0; p < hw; ++p) {
        out(static_cast<Eigen::Index>(c) * hw + p, j) = wide(c, j * hw + p);
      }
    }
  }
  return out;
}

/// (out_ch*hw x n) -> (out_ch x hw*n) reorder.
Eigen::MatrixXd regroup_to_wide(const Eigen::MatrixXd& batched, int out_ch,
                                int hw) {
  const Eigen::Index n = batched.cols();
  Eigen::MatrixXd out(out_ch, static_cast<Eigen::Index>(hw) * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int c = 0; c < out_ch; ++c) {
      for (int p = 0; p < hw; ++p) {
        out(c, j * hw + p) = batched(static_cast<Eigen::Index>(c) * hw + p, j);
      }
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd conv2d_forward(const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& w,
                               const Eigen::VectorXd& b,
                               const ImageShape& shape, int out_ch) {
  const int hw = shape.height * shape.width;
  Eigen::MatrixXd wide = w * im2col3x3(x, shape);
  wide.colwise() += b;
  return regroup_to_batch(wide, out_ch, hw, x.cols());
}

Eigen::MatrixXd avg_pool2_forward(const Eigen::MatrixXd& x,
                                  const ImageShape& shape) {
  const int C = shape.channels, H = shape.height, W = shape.width;
  const int oh = H / 2, ow = W / 2;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(C) * oh * ow, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          const auto base = static_cast<Eigen::Index>(c) * H * W;
          const double s = x(base + (2 * y) * W + 2 * xx, j) +
                           x(base + (2 * y) * W + 2 * xx + 1, j) +
                           x(base + (2 * y + 1) * W + 2 * xx, j) +
                           x(base + (2 * y + 1) * W + 2 * xx + 1, j);
          out(static_cast<Eigen::Index>(c) * oh * ow + y * ow + xx, j) =
              0.25 * s;
        }
      }
    }
  }
  return out;
}

Var conv2d(Tape& tp, Var x, Var w, Var b, const ImageShape& shape,
           int out_ch) {
  const int hw = shape.height * shape.width;
  check_invariant(tp.value(x).rows() == shape.pixel_count(),
                  "conv2d input shape mismatch");
  check_invariant(tp.value(w).rows() == out_ch &&
                      tp.value(w).cols() == static_cast<Eigen::Index>(shape.channels) * 9,
                  "conv2d weight shape mismatch");
  auto patches =
      std::make_shared<Eigen::MatrixXd>(im2col3x3(tp.value(x), shape));
  Eigen::MatrixXd wide = tp.value(w) * (*patches);
  wide.colwise() += tp.value(b).col(0);
  Eigen::MatrixXd value = regroup_to_batch(wide, out_ch, hw, tp.value(x).cols());
  Var out{tp.size()};
  ImageShape in_shape = shape;
  return tp.push(std::move(value),
                 [&tp, x, w, b, out, patches, in_shape, out_ch, hw] {
                   const Eigen::MatrixXd g_wide =
                       regroup_to_wide(tp.grad(out), out_ch, hw);
                   tp.accumulate(w, g_wide * patches->transpose());
                   tp.accumulate(b, g_wide.rowwise().sum());
                   const Eigen::MatrixXd g_patches =
                       tp.value(w).transpose() * g_wide;
                   Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(
                       tp.value(x).rows(), tp.value(x).cols());
                   col2im3x3_add(g_patches, in_shape, gx);
                   tp.accumulate(x, gx);
                 });
}

Var avg_pool2(Tape& tp, Var x, const ImageShape& shape) {
  check_invariant(shape.height % 2 == 0 && shape.width % 2 == 0,
                  "avg_pool2 needs even spatial dims");
  Eigen::MatrixXd value = avg_pool2_forward(tp.value(x), shape);
  Var out{tp.size()};
  ImageShape in_shape = shape;
  return tp.push(std::move(value), [&tp, x, out, in_shape] {
    const int C = in_shape.channels, H = in_shape.height, W = in_shape.width;
    const int oh = H / 2, ow = W / 2;
    const Eigen::MatrixXd& g = tp.grad(out);
    Eigen::MatrixXd gx(static_cast<Eigen::Index>(C) * H * W, g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (int c = 0; c < C; ++c) {
        for (int y = 0; y < oh; ++y) {
          for (int xx = 0; xx < ow; ++xx) {
            const double v =
                0.25 * g(static_cast<Eigen::Index>(c) * oh * ow + y * ow + xx, j);
            const auto base = static_cast<Eigen::Index>(c) * H * W;
            gx(base + (2 * y) * W + 2 * xx, j) = v;
            gx(base + (2 * y) * W + 2 * xx + 1, j) = v;
            gx(base + (2 * y + 1) * W + 2 * xx, j) = v;
            gx(base + (2 * y + 1) * W + 2 * xx + 1, j) = v;
          }
        }
      }
    }
    tp.accumulate(x, gx);
  });
}

Var upsample2(Tape& tp, Var x, const ImageShape& shape) {
  const int C = shape.channels, H = shape.height, W = shape.width;
  const int oh = H * 2, ow = W * 2;
  const auto& v = tp.value(x);
  Eigen::MatrixXd value(static_cast<Eigen::Index>(C) * oh * ow, v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          value(static_cast<Eigen::Index>(c) * oh * ow + y * ow + xx, j) =
              v(static_cast<Eigen::Index>(c) * H * W + (y / 2) * W + xx / 2, j);
        }
      }
    }
  }
  Var out{tp.size()};
  ImageShape in_shape = shape;
  return tp.push(std::move(value), [&tp, x, out, in_shape] {
    const int C2 = in_shape.channels, H2 = in_shape.height, W2 = in_shape.width;
    const int oh2 = H2 * 2, ow2 = W2 * 2;
    const Eigen::MatrixXd& g = tp.grad(out);
    Eigen::MatrixXd gx =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C2) * H2 * W2, g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (int c = 0; c < C2; ++c) {
        for (int y = 0; y < oh2; ++y) {
          for (int xx = 0; xx < ow2; ++xx) {
            gx(static_cast<Eigen::Index>(c) * H2 * W2 + (y / 2) * W2 + xx / 2,
               j) +=
                g(static_cast<Eigen::Index>(c) * oh2 * ow2 + y * ow2 + xx, j);
          }
        }
      }
    }
    tp.accumulate(x, gx);
  });
}

Var channel_bias(Tape& tp, Var x, Var bias, const ImageShape& shape) {
  const int C = shape.channels;
  const int hw = shape.height * shape.width;
  const auto& v = tp.value(x);
  const auto& b = tp.value(bias);
  check_invariant(b.rows() == C && b.cols() == v.cols(),
                  "channel_bias shape mismatch");
  Eigen::MatrixXd value = v;
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    for (int c = 0; c < C; ++c) {
      value.block(static_cast<Eigen::Index>(c) * hw, j, hw, 1).array() +=
          b(c, j);
    }
  }
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, x, bias, out, C, hw] {
    const Eigen::MatrixXd& g = tp.grad(out);
    tp.accumulate(x, g);
    Eigen::MatrixXd gb(C, g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (int c = 0; c < C; ++c) {
        gb(c, j) = g.block(static_cast<Eigen::Index>(c) * hw, j, hw, 1).sum();
      }
    }
    tp.accumulate(bias, gb);
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Var sum_all(Tape& tp, Var x) {
  Eigen::MatrixXd value(1, 1);
  value(0, 0) = tp.value(x).sum();
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, x, out] {
    tp.accumulate(x, Eigen::MatrixXd::Constant(tp.value(x).rows(),
                                               tp.value(x).cols(),
                                               tp.grad(out)(0, 0)));
  });
}

Var mean_all(Tape& tp, Var x) {
  const double inv = 1.0 / static_cast<double>(tp.value(x).size());
  return scale(tp, sum_all(tp, x), inv);
}

Var mse(Tape& tp, Var x, const Eigen::MatrixXd& target) {
  check_invariant(tp.value(x).rows() == target.rows() &&
                      tp.value(x).cols() == target.cols(),
                  "mse shape mismatch");
  auto t_keep = std::make_shared<Eigen::MatrixXd>(target);
  Eigen::MatrixXd value(1, 1);
  value(0, 0) = (tp.value(x) - *t_keep).squaredNorm() /
                static_cast<double>(target.size());
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, x, t_keep, out] {
    const double g = tp.grad(out)(0, 0);
    const double inv = 2.0 / static_cast<double>(t_keep->size());
    tp.accumulate(x, (g * inv) * (tp.value(x) - *t_keep));
  });
}

Var mean_sq(Tape& tp, Var x) {
  Eigen::MatrixXd value(1, 1);
  value(0, 0) =
      tp.value(x).squaredNorm() / static_cast<double>(tp.value(x).size());
  Var out{tp.size()};
  return tp.push(std::move(value), [&tp, x, out] {
    const double g = tp.grad(out)(0, 0);
    const double inv = 2.0 / static_cast<double>(tp.value(x).size());
    tp.accumulate(x, (g * inv) * tp.value(x));
  });
}

}  // namespace clog::nn

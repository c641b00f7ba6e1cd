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

#include <cmath>
#include <istream>
#include <ostream>

#include "clog/backbone.hpp"
#include "clog/diffusion.hpp"
#include "clog/errors.hpp"
#include "clog/nn/tape.hpp"

namespace clog {

namespace {

int default_channels(const ImageShape& shape, int requested) {
  if (requested > 0) return requested;
  return shape.height <= 8 ? 8 : 16;
}

struct ForwardPass {
  nn::Tape tape;
  std::vector<std::pair<nn::Var, int>> param_uses;

  nn::Var use(const nn::ParamStore& store, int id) {
    nn::Var v = tape.leaf(store.matrix(id));
    param_uses.emplace_back(v, id);
    return v;
  }

  nn::Var use_frozen(const nn::ParamStore& store, int id) {
    return tape.constant(store.matrix(id));
  }

  nn::Var pick(const nn::ParamStore& store, int id, bool trainable) {
    return trainable ? use(store, id) : use_frozen(store, id);
  }

  Eigen::VectorXd gather_grad(const nn::ParamStore& store) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(store.size());
    for (auto [var, id] : param_uses) {
      if (!tape.grad_defined(var)) continue;
      const Eigen::MatrixXd& gm = tape.grad(var);
      const auto& e = store.entry(id);
      g.segment(e.offset, e.rows * e.cols) +=
          Eigen::Map<const Eigen::VectorXd>(gm.data(), gm.size());
    }
    return g;
  }
};

constexpr int kPhaseD = 0;
constexpr int kPhaseG = 1;

class GanBackbone final : public GenerativeBackbone {
 public:
  GanBackbone(const ImageShape& shape, int num_classes,
              const BackboneOptions& options, Rng& init_rng)
      : shape_(shape),
        num_classes_(num_classes),
        opts_(options),
        channels_(default_channels(shape, options.base_channels)) {
    require(num_classes_ > 0, "backbone needs at least one class");
    require(shape_.height % 4 == 0 && shape_.width % 4 == 0,
            "image sides must divide by 4 for the two-stage generator");
    build_params();
    init_weights(init_rng);
    const auto [d_begin, d_len] = phase_slice(kPhaseD);
    const auto [g_begin, g_len] = phase_slice(kPhaseG);
    adam_d_ = nn::Adam(d_begin, d_len, opts_.learning_rate);
    adam_g_ = nn::Adam(g_begin, g_len, opts_.learning_rate);
  }

  std::unique_ptr<GenerativeBackbone> clone() const override {
    return std::unique_ptr<GenerativeBackbone>(new GanBackbone(*this));
  }

  BackboneKind kind() const override { return BackboneKind::kGan; }
  const ImageShape& image_shape() const override { return shape_; }

  Eigen::Index param_count() const override { return params_.size(); }
  Eigen::VectorXd params() const override { return params_.flat(); }

  void set_params(const Eigen::VectorXd& flat) override {
    check_invariant(flat.size() == params_.size(),
                    "parameter vector length mismatch");
    params_.mutable_flat() = flat;
  }

  const std::vector<nn::ParamEntry>& param_entries() const override {
    return params_.entries();
  }

  int phase_count() const override { return 2; }

  std::pair<Eigen::Index, Eigen::Index> phase_slice(int phase) const override {
    Eigen::Index begin = 0, length = 0;
    for (const auto& e : params_.entries()) {
      if (e.phase == phase) {
        if (length == 0) begin = e.offset;
        length += e.rows * e.cols;
      }
    }
    check_invariant(length > 0, "unknown phase");
    return {begin, length};
  }

  PhaseLoss phase_loss_grad(int phase, const Batch& batch, Rng& rng,
                            const GenerativeBackbone* distill_teacher,
                            double distill_weight) override {
    require(batch.size() > 0, "empty batch");
    if (phase == kPhaseD) {
      return discriminator_phase(batch, rng);
    }
    check_invariant(phase == kPhaseG, "gan backbone has two phases");
    return generator_phase(batch, rng, distill_teacher, distill_weight);
  }

  void apply_gradient(int phase, const Eigen::VectorXd& grad) override {
    if (phase == kPhaseD) {
      adam_d_.step(params_.mutable_flat(), grad);
    } else {
      check_invariant(phase == kPhaseG, "gan backbone has two phases");
      adam_g_.step(params_.mutable_flat(), grad);
    }
  }

  Eigen::MatrixXd sample(const std::vector<int>& conditions,
                         int /*sampler_steps*/, Rng& rng) const override {
    require(!conditions.empty(), "sample needs at least one condition");
    const Eigen::MatrixXd z = normal_matrix(
        opts_.latent_dim, static_cast<Eigen::Index>(conditions.size()), rng);
    return generate(z, conditions).cwiseMax(-1.0).cwiseMin(1.0);
  }

  Eigen::VectorXd squared_grad_importance(const Batch& batch,
                                          Rng& rng) override {
    const PhaseLoss d = phase_loss_grad(kPhaseD, batch, rng, nullptr, 0.0);
    const PhaseLoss g = phase_loss_grad(kPhaseG, batch, rng, nullptr, 0.0);
    return (d.grad + g.grad).array().square();
  }

  Eigen::VectorXd output_grad_importance(const Batch& batch,
                                         Rng& rng) override {
    // Importance of the generator pathway: |d mean||G(z, y)||^2 / d theta|.
    const Eigen::MatrixXd z = normal_matrix(opts_.latent_dim, batch.size(), rng);
    ForwardPass fp;
    nn::Var fake = generator_forward(fp, z, batch.conditions, true);
    nn::Var norm = nn::mean_sq(fp.tape, fake);
    fp.tape.backward(norm);
    return fp.gather_grad(params_).array().abs();
  }

  void reinitialize(Rng& rng) override {
    init_weights(rng);
    adam_d_.reset();
    adam_g_.reset();
  }

  void save_state(std::ostream& out) const override {
    nn::write_vec(out, params_.flat());
    adam_d_.save(out);
    adam_g_.save(out);
  }

  void load_state(std::istream& in) override {
    Eigen::VectorXd flat = nn::read_vec(in);
    set_params(flat);
    adam_d_.load(in);
    adam_g_.load(in);
  }

  /// Generator forward without gradients.
  Eigen::MatrixXd generate(const Eigen::MatrixXd& z,
                           const std::vector<int>& conditions) const {
    ForwardPass fp;
    nn::Var img = generator_forward(fp, z, conditions, false);
    return fp.tape.value(img);
  }

  /// Discriminator probability D(x, y) in (0, 1).
  Eigen::RowVectorXd discriminate(const Eigen::MatrixXd& images,
                                  const std::vector<int>& conditions) const {
    ForwardPass fp;
    nn::Var x = fp.tape.constant(images);
    nn::Var logit = discriminator_forward(fp, x, conditions, false);
    return fp.tape.value(logit).row(0).unaryExpr([](double v) {
      return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                    : std::exp(v) / (1.0 + std::exp(v));
    });
  }

 private:
  GanBackbone(const GanBackbone&) = default;

  void build_params() {
    const int c = channels_;
    const int in_ch = shape_.channels;
    const int s0h = shape_.height / 4;
    const int s0w = shape_.width / 4;
    const int e = opts_.embed_dim;
    const int f = 64;  // discriminator feature width
    d_conv1_w_ = params_.add("d.conv1.w", c, in_ch * 9, kPhaseD);
    d_conv1_b_ = params_.add("d.conv1.b", c, 1, kPhaseD);
    d_conv2_w_ = params_.add("d.conv2.w", 2 * c, c * 9, kPhaseD);
    d_conv2_b_ = params_.add("d.conv2.b", 2 * c, 1, kPhaseD);
    d_fc_w_ = params_.add("d.fc.w", f, 2 * c * s0h * s0w, kPhaseD);
    d_fc_b_ = params_.add("d.fc.b", f, 1, kPhaseD);
    d_out_w_ = params_.add("d.out.w", 1, f, kPhaseD);
    d_out_b_ = params_.add("d.out.b", 1, 1, kPhaseD);
    d_embed_ = params_.add("d.embed", f, num_classes_, kPhaseD);
    g_embed_ = params_.add("g.embed", e, num_classes_, kPhaseG);
    g_fc_w_ = params_.add("g.fc.w", 2 * c * s0h * s0w,
                          opts_.latent_dim + e, kPhaseG);
    g_fc_b_ = params_.add("g.fc.b", 2 * c * s0h * s0w, 1, kPhaseG);
    g_conv1_w_ = params_.add("g.conv1.w", c, 2 * c * 9, kPhaseG);
    g_conv1_b_ = params_.add("g.conv1.b", c, 1, kPhaseG);
    g_conv2_w_ = params_.add("g.conv2.w", c, c * 9, kPhaseG);
    g_conv2_b_ = params_.add("g.conv2.b", c, 1, kPhaseG);
    g_out_w_ = params_.add("g.out.w", in_ch, c * 9, kPhaseG);
    g_out_b_ = params_.add("g.out.b", in_ch, 1, kPhaseG);
    params_.finalize();
  }

  void init_weights(Rng& rng) {
    for (int id : {d_conv1_w_, d_conv2_w_, d_fc_w_}) params_.init_he(id, rng);
    for (int id : {d_conv1_b_, d_conv2_b_, d_fc_b_}) params_.init_zero(id);
    // Zero head + zero projection table: a fresh discriminator outputs
    // exactly 1/2 everywhere.
    params_.init_zero(d_out_w_);
    params_.init_zero(d_out_b_);
    params_.init_zero(d_embed_);
    params_.init_normal(g_embed_, rng, 0.5);
    params_.init_he(g_fc_w_, rng);
    params_.init_zero(g_fc_b_);
    for (int id : {g_conv1_w_, g_conv2_w_}) params_.init_he(id, rng);
    for (int id : {g_conv1_b_, g_conv2_b_}) params_.init_zero(id);
    params_.init_zero(g_out_w_);
    params_.init_zero(g_out_b_);
  }

  nn::Var generator_forward(ForwardPass& fp, const Eigen::MatrixXd& z,
                            const std::vector<int>& conditions,
                            bool trainable) const {
    nn::Tape& tp = fp.tape;
    const int c = channels_;
    const ImageShape s0{2 * c, shape_.height / 4, shape_.width / 4};
    const ImageShape s1{2 * c, shape_.height / 2, shape_.width / 2};
    const ImageShape s1c{c, shape_.height / 2, shape_.width / 2};
    const ImageShape s2{c, shape_.height, shape_.width};
    nn::Var zin = tp.constant(z);
    nn::Var cls =
        nn::embed(tp, fp.pick(params_, g_embed_, trainable), conditions);
    nn::Var in = nn::concat_rows(tp, zin, cls);
    nn::Var h = nn::affine(tp, fp.pick(params_, g_fc_w_, trainable), in,
                           fp.pick(params_, g_fc_b_, trainable));
    h = nn::silu(tp, h);
    h = nn::upsample2(tp, h, s0);
    h = nn::conv2d(tp, h, fp.pick(params_, g_conv1_w_, trainable),
                   fp.pick(params_, g_conv1_b_, trainable), s1, c);
    h = nn::silu(tp, h);
    h = nn::upsample2(tp, h, s1c);
    h = nn::conv2d(tp, h, fp.pick(params_, g_conv2_w_, trainable),
                   fp.pick(params_, g_conv2_b_, trainable), s2, c);
    h = nn::silu(tp, h);
    h = nn::conv2d(tp, h, fp.pick(params_, g_out_w_, trainable),
                   fp.pick(params_, g_out_b_, trainable), s2, shape_.channels);
    return nn::tanh_op(tp, h);
  }

  /// Returns the pre-squash score; x_var may be a leaf when its input
  /// gradient is wanted.
  nn::Var discriminator_forward(ForwardPass& fp, nn::Var x_var,
                                const std::vector<int>& conditions,
                                bool trainable) const {
    nn::Tape& tp = fp.tape;
    const int c = channels_;
    const ImageShape s0{shape_.channels, shape_.height, shape_.width};
    const ImageShape s1{c, shape_.height, shape_.width};
    const ImageShape s1p{c, shape_.height / 2, shape_.width / 2};
    const ImageShape s2{2 * c, shape_.height / 2, shape_.width / 2};
    nn::Var h = nn::conv2d(tp, x_var, fp.pick(params_, d_conv1_w_, trainable),
                           fp.pick(params_, d_conv1_b_, trainable), s0, c);
    h = nn::leaky_relu(tp, h, 0.2);
    h = nn::avg_pool2(tp, h, s1);
    h = nn::conv2d(tp, h, fp.pick(params_, d_conv2_w_, trainable),
                   fp.pick(params_, d_conv2_b_, trainable), s1p, 2 * c);
    h = nn::leaky_relu(tp, h, 0.2);
    h = nn::avg_pool2(tp, h, s2);
    nn::Var f = nn::affine(tp, fp.pick(params_, d_fc_w_, trainable), h,
                           fp.pick(params_, d_fc_b_, trainable));
    f = nn::leaky_relu(tp, f, 0.2);
    nn::Var logit = nn::affine(tp, fp.pick(params_, d_out_w_, trainable), f,
                               fp.pick(params_, d_out_b_, trainable));
    nn::Var proj = nn::row_dot(
        tp, f, nn::embed(tp, fp.pick(params_, d_embed_, trainable), conditions));
    return nn::add(tp, logit, proj);
  }

  /// -[E log D(x) + E log(1 - D(G(z)))] in minimization form via softplus of
  /// the scores, plus the gradient penalty on real samples.
  PhaseLoss discriminator_phase(const Batch& batch, Rng& rng) {
    const Eigen::Index n = batch.size();
    const Eigen::MatrixXd z = normal_matrix(opts_.latent_dim, n, rng);
    const Eigen::MatrixXd fake = generate(z, batch.conditions);

    ForwardPass fp;
    nn::Var x_real = fp.tape.constant(batch.images);
    nn::Var real_logit =
        discriminator_forward(fp, x_real, batch.conditions, true);
    nn::Var fake_in = fp.tape.constant(fake);
    nn::Var fake_logit =
        discriminator_forward(fp, fake_in, batch.conditions, true);
    nn::Var loss = nn::add(
        fp.tape,
        nn::mean_all(fp.tape, nn::softplus(fp.tape, nn::scale(fp.tape,
                                                              real_logit, -1.0))),
        nn::mean_all(fp.tape, nn::softplus(fp.tape, fake_logit)));
    fp.tape.backward(loss);

    PhaseLoss out;
    out.loss = fp.tape.value(loss)(0, 0);
    out.grad = fp.gather_grad(params_);

    if (opts_.r1_gamma > 0.0) {
      const auto [r1_value, r1_grad] = r1_penalty(batch);
      out.loss += r1_value;
      out.grad += r1_grad;
    }
    return out;
  }

  /// (gamma/2) * E ||d score / d x||^2 on real samples, with its parameter
  /// gradient obtained from a central difference of score gradients along the
  /// input-gradient direction (an exact Hessian-vector product in the limit).
  std::pair<double, Eigen::VectorXd> r1_penalty(const Batch& batch) const {
    const double n = static_cast<double>(batch.size());
    Eigen::MatrixXd gx;
    {
      ForwardPass fp;
      nn::Var x = fp.tape.leaf(batch.images);
      nn::Var logit = discriminator_forward(fp, x, batch.conditions, false);
      nn::Var s = nn::sum_all(fp.tape, logit);
      fp.tape.backward(s);
      gx = fp.tape.grad(x);
    }
    const double value = 0.5 * opts_.r1_gamma * gx.squaredNorm() / n;
    const double g_norm = gx.norm();
    if (g_norm == 0.0) {
      return {value, Eigen::VectorXd::Zero(params_.size())};
    }
    const double eps =
        1e-4 * (1.0 + batch.images.norm()) / g_norm;
    auto score_param_grad = [this, &batch](const Eigen::MatrixXd& images) {
      ForwardPass fp;
      nn::Var x = fp.tape.constant(images);
      nn::Var logit = discriminator_forward(fp, x, batch.conditions, true);
      nn::Var s = nn::sum_all(fp.tape, logit);
      fp.tape.backward(s);
      return fp.gather_grad(params_);
    };
    const Eigen::VectorXd plus = score_param_grad(batch.images + eps * gx);
    const Eigen::VectorXd minus = score_param_grad(batch.images - eps * gx);
    Eigen::VectorXd grad =
        (opts_.r1_gamma / n) * (plus - minus) / (2.0 * eps);
    return {value, std::move(grad)};
  }

  PhaseLoss generator_phase(const Batch& batch, Rng& rng,
                            const GenerativeBackbone* distill_teacher,
                            double distill_weight) {
    const Eigen::Index n = batch.size();
    const Eigen::MatrixXd z = normal_matrix(opts_.latent_dim, n, rng);

    ForwardPass fp;
    nn::Var fake = generator_forward(fp, z, batch.conditions, true);
    nn::Var logit = discriminator_forward(fp, fake, batch.conditions, false);
    nn::Var loss;
    if (opts_.saturating_generator_loss) {
      // Literal minimax term E log(1 - D(G(z))) in minimization form.
      loss = nn::scale(fp.tape,
                       nn::mean_all(fp.tape, nn::softplus(fp.tape, logit)),
                       -1.0);
    } else {
      loss = nn::mean_all(
          fp.tape, nn::softplus(fp.tape, nn::scale(fp.tape, logit, -1.0)));
    }
    if (distill_teacher != nullptr && distill_weight != 0.0) {
      const auto* teacher = dynamic_cast<const GanBackbone*>(distill_teacher);
      check_invariant(teacher != nullptr,
                      "distillation teacher must share the backbone kind");
      const Eigen::MatrixXd teacher_fake =
          teacher->generate(z, batch.conditions);
      nn::Var match = nn::mse(fp.tape, fake, teacher_fake);
      loss = nn::add(fp.tape, loss,
                     nn::scale(fp.tape, match, distill_weight));
    }
    fp.tape.backward(loss);

    PhaseLoss out;
    out.loss = fp.tape.value(loss)(0, 0);
    out.grad = fp.gather_grad(params_);
    return out;
  }

  ImageShape shape_;
  int num_classes_;
  BackboneOptions opts_;
  int channels_;
  nn::ParamStore params_;
  nn::Adam adam_d_, adam_g_;
  int d_conv1_w_ = -1, d_conv1_b_ = -1, d_conv2_w_ = -1, d_conv2_b_ = -1;
  int d_fc_w_ = -1, d_fc_b_ = -1, d_out_w_ = -1, d_out_b_ = -1, d_embed_ = -1;
  int g_embed_ = -1, g_fc_w_ = -1, g_fc_b_ = -1;
  int g_conv1_w_ = -1, g_conv1_b_ = -1, g_conv2_w_ = -1, g_conv2_b_ = -1;
  int g_out_w_ = -1, g_out_b_ = -1;
};

}  // namespace

std::unique_ptr<GenerativeBackbone> make_gan_backbone(
    const ImageShape& shape, int num_classes, const BackboneOptions& options,
    Rng& init_rng) {
  return std::make_unique<GanBackbone>(shape, num_classes, options, init_rng);
}

std::unique_ptr<GenerativeBackbone> make_diffusion_backbone(
    const ImageShape& shape, int num_classes, const BackboneOptions& options,
    Rng& init_rng);

std::unique_ptr<GenerativeBackbone> make_backbone(BackboneKind kind,
                                                  const ImageShape& shape,
                                                  int num_classes,
                                                  const BackboneOptions& options,
                                                  Rng& init_rng) {
  if (kind == BackboneKind::kDiffusion) {
    return make_diffusion_backbone(shape, num_classes, options, init_rng);
  }
  return make_gan_backbone(shape, num_classes, options, init_rng);
}

}  // namespace clog

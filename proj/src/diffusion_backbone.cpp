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

/// Records which parameter leaves a forward pass used so the flat gradient
/// can be gathered after backward().
struct ForwardPass {
  nn::Tape tape;
  std::vector<std::pair<nn::Var, int>> param_uses;

  nn::Var use(const nn::ParamStore& store, int id) {
    nn::Var v = tape.leaf(store.matrix(id));
    param_uses.emplace_back(v, id);
    return v;
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

class DiffusionBackbone final : public GenerativeBackbone {
 public:
  DiffusionBackbone(const ImageShape& shape, int num_classes,
                    const BackboneOptions& options, Rng& init_rng)
      : shape_(shape),
        num_classes_(num_classes),
        opts_(options),
        channels_(default_channels(shape, options.base_channels)),
        schedule_(NoiseSchedule::linear(options.diffusion_steps)) {
    require(num_classes_ > 0, "backbone needs at least one class");
    require(shape_.height % 2 == 0 && shape_.width % 2 == 0,
            "image sides must be even for the two-level denoiser");
    build_params();
    init_weights(init_rng);
    adam_ = nn::Adam(0, params_.size(), opts_.learning_rate);
  }

  std::unique_ptr<GenerativeBackbone> clone() const override {
    return std::unique_ptr<GenerativeBackbone>(new DiffusionBackbone(*this));
  }

  BackboneKind kind() const override { return BackboneKind::kDiffusion; }
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

  int phase_count() const override { return 1; }

  std::pair<Eigen::Index, Eigen::Index> phase_slice(int phase) const override {
    check_invariant(phase == 0, "diffusion backbone has a single phase");
    return {0, params_.size()};
  }

  PhaseLoss phase_loss_grad(int phase, const Batch& batch, Rng& rng,
                            const GenerativeBackbone* distill_teacher,
                            double distill_weight) override {
    check_invariant(phase == 0, "diffusion backbone has a single phase");
    require(batch.size() > 0, "empty batch");
    const Eigen::Index n = batch.size();
    const Eigen::Index pixels = shape_.pixel_count();

    std::vector<int> t_batch(static_cast<std::size_t>(n));
    for (auto& t : t_batch) {
      t = 1 + static_cast<int>(rng.below(
              static_cast<std::uint64_t>(schedule_.T())));
    }
    const Eigen::MatrixXd eps = normal_matrix(pixels, n, rng);
    Eigen::MatrixXd x_t(pixels, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double ab = schedule_.alpha_bar(t_batch[static_cast<std::size_t>(j)]);
      x_t.col(j) = std::sqrt(ab) * batch.images.col(j) +
                   std::sqrt(1.0 - ab) * eps.col(j);
    }

    ForwardPass fp;
    nn::Var pred = forward_eps(fp, x_t, t_batch, batch.conditions);
    nn::Var loss = nn::mse(fp.tape, pred, eps);
    if (distill_teacher != nullptr && distill_weight != 0.0) {
      const auto* teacher =
          dynamic_cast<const DiffusionBackbone*>(distill_teacher);
      check_invariant(teacher != nullptr,
                      "distillation teacher must share the backbone kind");
      const Eigen::MatrixXd teacher_pred =
          teacher->predict_eps(x_t, t_batch, batch.conditions);
      nn::Var match = nn::mse(fp.tape, pred, teacher_pred);
      loss = nn::add(fp.tape, loss,
                     nn::scale(fp.tape, match, distill_weight));
    }
    fp.tape.backward(loss);

    PhaseLoss out;
    out.loss = fp.tape.value(loss)(0, 0);
    out.grad = fp.gather_grad(params_);
    return out;
  }

  void apply_gradient(int phase, const Eigen::VectorXd& grad) override {
    check_invariant(phase == 0, "diffusion backbone has a single phase");
    adam_.step(params_.mutable_flat(), grad);
  }

  Eigen::MatrixXd sample(const std::vector<int>& conditions, int sampler_steps,
                         Rng& rng) const override {
    require(!conditions.empty(), "sample needs at least one condition");
    const auto n = static_cast<Eigen::Index>(conditions.size());
    EpsPredictor predictor = [this, &conditions](const Eigen::MatrixXd& x,
                                                 int t) {
      std::vector<int> t_batch(conditions.size(), t);
      return predict_eps(x, t_batch, conditions);
    };
    return ddim_sample(predictor, schedule_, shape_.pixel_count(), n,
                       sampler_steps, 0.0, rng);
  }

  Eigen::VectorXd squared_grad_importance(const Batch& batch,
                                          Rng& rng) override {
    return phase_loss_grad(0, batch, rng, nullptr, 0.0)
        .grad.array()
        .square();
  }

  Eigen::VectorXd output_grad_importance(const Batch& batch,
                                         Rng& rng) override {
    const Eigen::Index n = batch.size();
    const Eigen::Index pixels = shape_.pixel_count();
    std::vector<int> t_batch(static_cast<std::size_t>(n));
    for (auto& t : t_batch) {
      t = 1 + static_cast<int>(rng.below(
              static_cast<std::uint64_t>(schedule_.T())));
    }
    const Eigen::MatrixXd eps = normal_matrix(pixels, n, rng);
    Eigen::MatrixXd x_t(pixels, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double ab = schedule_.alpha_bar(t_batch[static_cast<std::size_t>(j)]);
      x_t.col(j) = std::sqrt(ab) * batch.images.col(j) +
                   std::sqrt(1.0 - ab) * eps.col(j);
    }
    ForwardPass fp;
    nn::Var pred = forward_eps(fp, x_t, t_batch, batch.conditions);
    nn::Var norm = nn::mean_sq(fp.tape, pred);
    fp.tape.backward(norm);
    return fp.gather_grad(params_).array().abs();
  }

  void reinitialize(Rng& rng) override {
    init_weights(rng);
    adam_.reset();
  }

  void save_state(std::ostream& out) const override {
    nn::write_vec(out, params_.flat());
    adam_.save(out);
  }

  void load_state(std::istream& in) override {
    Eigen::VectorXd flat = nn::read_vec(in);
    set_params(flat);
    adam_.load(in);
  }

  const NoiseSchedule& schedule() const { return schedule_; }

  /// Inference-only noise prediction (no gradients recorded for caller).
  Eigen::MatrixXd predict_eps(const Eigen::MatrixXd& x_t,
                              const std::vector<int>& t_batch,
                              const std::vector<int>& conditions) const {
    ForwardPass fp;
    nn::Var pred = forward_eps(fp, x_t, t_batch, conditions);
    return fp.tape.value(pred);
  }

 private:
  DiffusionBackbone(const DiffusionBackbone&) = default;

  void build_params() {
    const int e = opts_.embed_dim;
    const int c = channels_;
    const int in_ch = shape_.channels;
    temb_w1_ = params_.add("temb.w1", e, e);
    temb_b1_ = params_.add("temb.b1", e, 1);
    temb_w2_ = params_.add("temb.w2", e, e);
    temb_b2_ = params_.add("temb.b2", e, 1);
    cls_embed_ = params_.add("cls.embed", e, num_classes_);
    enc1_w_ = params_.add("enc1.w", c, in_ch * 9);
    enc1_b_ = params_.add("enc1.b", c, 1);
    emb1_w_ = params_.add("emb1.w", c, e);
    enc2_w_ = params_.add("enc2.w", 2 * c, c * 9);
    enc2_b_ = params_.add("enc2.b", 2 * c, 1);
    emb2_w_ = params_.add("emb2.w", 2 * c, e);
    mid_w_ = params_.add("mid.w", 2 * c, 2 * c * 9);
    mid_b_ = params_.add("mid.b", 2 * c, 1);
    emb3_w_ = params_.add("emb3.w", 2 * c, e);
    dec_w_ = params_.add("dec.w", c, 3 * c * 9);
    dec_b_ = params_.add("dec.b", c, 1);
    emb4_w_ = params_.add("emb4.w", c, e);
    out_w_ = params_.add("out.w", in_ch, c * 9);
    out_b_ = params_.add("out.b", in_ch, 1);
    params_.finalize();
  }

  void init_weights(Rng& rng) {
    params_.init_he(temb_w1_, rng);
    params_.init_zero(temb_b1_);
    params_.init_he(temb_w2_, rng);
    params_.init_zero(temb_b2_);
    params_.init_normal(cls_embed_, rng, 0.5);
    for (int id : {enc1_w_, enc2_w_, mid_w_, dec_w_}) {
      params_.init_he(id, rng);
    }
    for (int id : {enc1_b_, enc2_b_, mid_b_, dec_b_}) params_.init_zero(id);
    for (int id : {emb1_w_, emb2_w_, emb3_w_, emb4_w_}) {
      params_.init_he(id, rng, 0.5);
    }
    // Zero-initialized head: the freshly built model predicts zero noise.
    params_.init_zero(out_w_);
    params_.init_zero(out_b_);
  }

  Eigen::MatrixXd time_features(const std::vector<int>& t_batch) const {
    const int e = opts_.embed_dim;
    const int half = e / 2;
    Eigen::MatrixXd f(e, static_cast<Eigen::Index>(t_batch.size()));
    for (std::size_t j = 0; j < t_batch.size(); ++j) {
      const double t = static_cast<double>(t_batch[j]);
      for (int k = 0; k < half; ++k) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(k) /
                     std::max(half - 1, 1));
        f(2 * k, static_cast<Eigen::Index>(j)) = std::sin(t * freq);
        f(2 * k + 1, static_cast<Eigen::Index>(j)) = std::cos(t * freq);
      }
    }
    return f;
  }

  nn::Var forward_eps(ForwardPass& fp, const Eigen::MatrixXd& x_t,
                      const std::vector<int>& t_batch,
                      const std::vector<int>& conditions) const {
    check_invariant(x_t.cols() == static_cast<Eigen::Index>(t_batch.size()) &&
                        t_batch.size() == conditions.size(),
                    "forward_eps batch size mismatch");
    nn::Tape& tp = fp.tape;
    const int c = channels_;
    const ImageShape full = shape_;
    const ImageShape full_c{c, full.height, full.width};
    const ImageShape half_c{c, full.height / 2, full.width / 2};
    const ImageShape half_2c{2 * c, full.height / 2, full.width / 2};
    const ImageShape full_cat{3 * c, full.height, full.width};
    const ImageShape full_out{c, full.height, full.width};

    nn::Var x = tp.constant(x_t);
    nn::Var tf = tp.constant(time_features(t_batch));
    nn::Var h = nn::affine(tp, fp.use(params_, temb_w1_), tf,
                           fp.use(params_, temb_b1_));
    h = nn::silu(tp, h);
    h = nn::affine(tp, fp.use(params_, temb_w2_), h,
                   fp.use(params_, temb_b2_));
    nn::Var cls = nn::embed(tp, fp.use(params_, cls_embed_), conditions);
    nn::Var emb = nn::add(tp, h, cls);

    nn::Var h1 = nn::conv2d(tp, x, fp.use(params_, enc1_w_),
                            fp.use(params_, enc1_b_), full, c);
    h1 = nn::channel_bias(
        tp, h1, nn::matmul(tp, fp.use(params_, emb1_w_), emb), full_c);
    h1 = nn::silu(tp, h1);

    nn::Var h2 = nn::avg_pool2(tp, h1, full_c);
    h2 = nn::conv2d(tp, h2, fp.use(params_, enc2_w_),
                    fp.use(params_, enc2_b_), half_c, 2 * c);
    h2 = nn::channel_bias(
        tp, h2, nn::matmul(tp, fp.use(params_, emb2_w_), emb), half_2c);
    h2 = nn::silu(tp, h2);

    nn::Var h3 = nn::conv2d(tp, h2, fp.use(params_, mid_w_),
                            fp.use(params_, mid_b_), half_2c, 2 * c);
    h3 = nn::channel_bias(
        tp, h3, nn::matmul(tp, fp.use(params_, emb3_w_), emb), half_2c);
    h3 = nn::silu(tp, h3);

    nn::Var up = nn::upsample2(tp, h3, half_2c);
    nn::Var cat = nn::concat_rows(tp, up, h1);
    nn::Var h4 = nn::conv2d(tp, cat, fp.use(params_, dec_w_),
                            fp.use(params_, dec_b_), full_cat, c);
    h4 = nn::channel_bias(
        tp, h4, nn::matmul(tp, fp.use(params_, emb4_w_), emb), full_out);
    h4 = nn::silu(tp, h4);

    return nn::conv2d(tp, h4, fp.use(params_, out_w_),
                      fp.use(params_, out_b_), full_out, shape_.channels);
  }

  ImageShape shape_;
  int num_classes_;
  BackboneOptions opts_;
  int channels_;
  NoiseSchedule schedule_;
  nn::ParamStore params_;
  nn::Adam adam_;
  int temb_w1_ = -1, temb_b1_ = -1, temb_w2_ = -1, temb_b2_ = -1;
  int cls_embed_ = -1;
  int enc1_w_ = -1, enc1_b_ = -1, emb1_w_ = -1;
  int enc2_w_ = -1, enc2_b_ = -1, emb2_w_ = -1;
  int mid_w_ = -1, mid_b_ = -1, emb3_w_ = -1;
  int dec_w_ = -1, dec_b_ = -1, emb4_w_ = -1;
  int out_w_ = -1, out_b_ = -1;
};

}  // namespace

std::unique_ptr<GenerativeBackbone> make_diffusion_backbone(
    const ImageShape& shape, int num_classes, const BackboneOptions& options,
    Rng& init_rng) {
  return std::make_unique<DiffusionBackbone>(shape, num_classes, options,
                                             init_rng);
}

}  // namespace clog

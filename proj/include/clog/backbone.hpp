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

#ifndef CLOG_BACKBONE_HPP
#define CLOG_BACKBONE_HPP

#include <Eigen/Dense>
#include <iosfwd>
#include <memory>
#include <vector>

#include "clog/dataset.hpp"
#include "clog/nn/params.hpp"
#include "clog/rng.hpp"

namespace clog {

/// One training batch: images column-per-sample plus per-sample conditions.
struct Batch {
  Eigen::MatrixXd images;
  std::vector<int> conditions;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(conditions.size());
  }
};

/// Loss and full-length flat gradient of one optimizer phase. Entries outside
/// the phase's parameter slice are zero.
struct PhaseLoss {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// Tuning knobs of the small trainable backbones. Defaults are sized for
/// minutes-scale CPU training on 8x8..32x32 inputs.
struct BackboneOptions {
  int base_channels = 0;        // 0: picked from resolution (8 for <=8x8, else 16)
  int embed_dim = 32;           // time/class embedding width
  int latent_dim = 32;          // generator prior dimension
  double learning_rate = 1e-3;  // per-phase Adam step size
  int diffusion_steps = 1000;   // forward-process length
  double r1_gamma = 0.01;       // gradient penalty weight on real samples
  bool saturating_generator_loss = false;  // literal minimax form when true
};

/// The trainable conditional generator contract shared by the diffusion and
/// adversarial implementations. Parameters are exposed as one flat vector;
/// multi-network models split it into per-phase slices (phase 0 =
/// discriminator, phase 1 = generator).
class GenerativeBackbone {
 public:
  virtual ~GenerativeBackbone() = default;

  virtual std::unique_ptr<GenerativeBackbone> clone() const = 0;
  virtual BackboneKind kind() const = 0;
  virtual const ImageShape& image_shape() const = 0;

  virtual Eigen::Index param_count() const = 0;
  virtual Eigen::VectorXd params() const = 0;
  virtual void set_params(const Eigen::VectorXd& flat) = 0;
  virtual const std::vector<nn::ParamEntry>& param_entries() const = 0;

  virtual int phase_count() const = 0;
  /// [begin, begin+length) slice of the flat vector owned by a phase.
  virtual std::pair<Eigen::Index, Eigen::Index> phase_slice(int phase) const = 0;

  /// Base training loss and gradient for one phase. Stochastic draws
  /// (timesteps, noise, latents) come from `rng`. When `distill_teacher` is
  /// non-null an output-matching l2 term weighted by `distill_weight` is
  /// added (diffusion: noise prediction on the same noised inputs;
  /// adversarial: generator outputs on the shared latent batch, generator
  /// phase only). Does not modify parameters.
  virtual PhaseLoss phase_loss_grad(int phase, const Batch& batch, Rng& rng,
                                    const GenerativeBackbone* distill_teacher,
                                    double distill_weight) = 0;

  /// One optimizer step on the phase's slice with the given full-length
  /// gradient.
  virtual void apply_gradient(int phase, const Eigen::VectorXd& grad) = 0;

  /// Draws one image per condition; deterministic given the rng state.
  /// Outputs lie in [-1, 1].
  virtual Eigen::MatrixXd sample(const std::vector<int>& conditions,
                                 int sampler_steps, Rng& rng) const = 0;

  /// Squared-gradient contribution of one batch (diagonal empirical Fisher).
  virtual Eigen::VectorXd squared_grad_importance(const Batch& batch,
                                                  Rng& rng) = 0;
  /// |d mean||output||^2 / d theta| contribution of one batch; the generator
  /// pathway defines "output".
  virtual Eigen::VectorXd output_grad_importance(const Batch& batch,
                                                 Rng& rng) = 0;

  /// Fresh weight draw plus optimizer reset (used by the per-task-model
  /// strategy).
  virtual void reinitialize(Rng& rng) = 0;

  /// Serializes parameters and optimizer state (bit-exact round trip).
  virtual void save_state(std::ostream& out) const = 0;
  virtual void load_state(std::istream& in) = 0;
};

std::unique_ptr<GenerativeBackbone> make_backbone(BackboneKind kind,
                                                  const ImageShape& shape,
                                                  int num_classes,
                                                  const BackboneOptions& options,
                                                  Rng& init_rng);

}  // namespace clog

#endif  // CLOG_BACKBONE_HPP

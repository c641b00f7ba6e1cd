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

#include "clog/fid.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "clog/hashing.hpp"
#include "clog/nn/tape.hpp"
#include "clog/rng.hpp"

namespace clog {

namespace {

// Negative eigenvalues of a PSD product can only come from roundoff.
constexpr double kEigenClampFloor = -1e-8;

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  check_invariant(solver.info() == Eigen::Success,
                  "eigendecomposition failed in symmetric_sqrt");
  Eigen::VectorXd clamped = solver.eigenvalues().cwiseMax(0.0);
  return solver.eigenvectors() * clamped.cwiseSqrt().asDiagonal() *
         solver.eigenvectors().transpose();
}

void fill_random(Eigen::MatrixXd& m, Rng& rng, double std) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m(r, c) = std * rng.normal();
    }
  }
}

}  // namespace

void gaussian_fit(const Eigen::MatrixXd& features, Eigen::RowVectorXd& mean,
                  Eigen::MatrixXd& cov) {
  const Eigen::Index n = features.rows();
  mean = features.colwise().mean();
  const Eigen::MatrixXd centered = features.rowwise() - mean;
  cov = centered.transpose() * centered / static_cast<double>(n - 1);
}

double trace_sqrt_product(const Eigen::MatrixXd& sigma_r,
                          const Eigen::MatrixXd& sigma_g) {
  const Eigen::MatrixXd root_r = symmetric_sqrt(sigma_r);
  Eigen::MatrixXd inner = root_r * sigma_g * root_r;
  inner = 0.5 * (inner + inner.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(inner);
  check_invariant(solver.info() == Eigen::Success,
                  "eigendecomposition failed in trace_sqrt_product");
  double trace = 0.0;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    double ev = solver.eigenvalues()(i);
    if (ev < 0.0) {
      check_invariant(ev >= kEigenClampFloor,
                      "covariance product eigenvalue below clamp floor");
      ev = 0.0;
    }
    trace += std::sqrt(ev);
  }
  return trace;
}

FeatureExtractor::FeatureExtractor(int in_channels,
                                   const std::string& extractor_id)
    : extractor_id_(extractor_id), in_channels_(in_channels) {
  require(in_channels >= 1, "feature extractor needs at least 1 channel");
  Fnv1a hasher;
  hasher.update(extractor_id_);
  hasher.update_u64(static_cast<std::uint64_t>(in_channels));
  Rng rng(hasher.digest());
  w1_.resize(16, in_channels * 9);
  w2_.resize(32, 16 * 9);
  w3_.resize(kFeatureDim, 32 * 9);
  b1_ = Eigen::VectorXd::Zero(16);
  b2_ = Eigen::VectorXd::Zero(32);
  b3_ = Eigen::VectorXd::Zero(kFeatureDim);
  fill_random(w1_, rng, std::sqrt(2.0 / static_cast<double>(w1_.cols())));
  fill_random(w2_, rng, std::sqrt(2.0 / static_cast<double>(w2_.cols())));
  fill_random(w3_, rng, std::sqrt(2.0 / static_cast<double>(w3_.cols())));
}

FeatureExtractor FeatureExtractor::standard(int in_channels) {
  return FeatureExtractor(in_channels, "randconv64-v1");
}

Eigen::MatrixXd FeatureExtractor::embed(const Eigen::MatrixXd& images,
                                        const ImageShape& shape) const {
  require(shape.channels == in_channels_,
          "image channel count does not match extractor");
  require(shape.height % 4 == 0 && shape.width % 4 == 0,
          "feature extractor needs side lengths divisible by 4");
  require(images.rows() == shape.pixel_count(),
          "image rows do not match shape");
  const Eigen::Index n = images.cols();
  ImageShape s1{16, shape.height, shape.width};
  ImageShape s1p{16, shape.height / 2, shape.width / 2};
  ImageShape s2{32, shape.height / 2, shape.width / 2};
  ImageShape s2p{32, shape.height / 4, shape.width / 4};
  ImageShape s3{kFeatureDim, shape.height / 4, shape.width / 4};

  auto silu = [](Eigen::MatrixXd& m) {
    m = m.array() / (1.0 + (-m.array()).exp());
  };

  Eigen::MatrixXd h = nn::conv2d_forward(images, w1_, b1_, shape, 16);
  silu(h);
  h = nn::avg_pool2_forward(h, s1);
  h = nn::conv2d_forward(h, w2_, b2_, s1p, 32);
  silu(h);
  h = nn::avg_pool2_forward(h, s2);
  h = nn::conv2d_forward(h, w3_, b3_, s2p, kFeatureDim);
  silu(h);

  // Global average pool over spatial positions, one row per sample.
  const int spatial = s3.height * s3.width;
  Eigen::MatrixXd features(n, kFeatureDim);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Map<const Eigen::MatrixXd> per_channel(h.col(j).data(), spatial,
                                                  kFeatureDim);
    features.row(j) = per_channel.colwise().mean();
  }
  return features;
}

}  // namespace clog

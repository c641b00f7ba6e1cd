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

#ifndef CLOG_FID_HPP
#define CLOG_FID_HPP

#include <Eigen/Dense>
#include <string>

#include "clog/dataset.hpp"
#include "clog/errors.hpp"

namespace clog {

/// Trace of the square root of sigma_r^(1/2) sigma_g sigma_r^(1/2), computed
/// with symmetric eigendecompositions; tiny negative eigenvalues from roundoff
/// are clamped to zero.
double trace_sqrt_product(const Eigen::MatrixXd& sigma_r,
                          const Eigen::MatrixXd& sigma_g);

/// Sample mean (1 x d) and unbiased covariance (d x d) of row-major features.
void gaussian_fit(const Eigen::MatrixXd& features, Eigen::RowVectorXd& mean,
                  Eigen::MatrixXd& cov);

/// Frechet distance between Gaussian fits of two feature sets (rows are
/// samples, columns are feature dimensions):
///   ||mu_r - mu_g||^2 + Tr(sigma_r + sigma_g - 2 (sigma_r sigma_g)^(1/2)).
/// Lower is better. Each side needs at least 2 samples.
template <class D1, class D2>
double fid(const Eigen::MatrixBase<D1>& real_features,
           const Eigen::MatrixBase<D2>& gen_features) {
  require(real_features.cols() == gen_features.cols(),
          "feature dimensionality mismatch");
  require(real_features.cols() >= 1, "features must have at least 1 column");
  require(real_features.rows() >= 2 && gen_features.rows() >= 2,
          "fid needs at least 2 samples per side");
  const Eigen::MatrixXd real = real_features;
  const Eigen::MatrixXd gen = gen_features;
  Eigen::RowVectorXd mu_r, mu_g;
  Eigen::MatrixXd cov_r, cov_g;
  gaussian_fit(real, mu_r, cov_r);
  gaussian_fit(gen, mu_g, cov_g);
  const double mean_term = (mu_r - mu_g).squaredNorm();
  const double trace_term =
      cov_r.trace() + cov_g.trace() - 2.0 * trace_sqrt_product(cov_r, cov_g);
  return mean_term + trace_term;
}

/// Fixed, seeded, randomly initialized convolutional embedder producing 64
/// feature dimensions per image. Never trained; identical extractor_id means
/// identical embeddings. Metric values are only comparable within one
/// extractor_id.
class FeatureExtractor {
 public:
  static constexpr int kFeatureDim = 64;

  FeatureExtractor(int in_channels, const std::string& extractor_id);

  /// Default extractor for a dataset's channel count.
  static FeatureExtractor standard(int in_channels);

  const std::string& extractor_id() const { return extractor_id_; }

  /// images: pixel_count x n (columns are samples); returns n x 64 features.
  Eigen::MatrixXd embed(const Eigen::MatrixXd& images,
                        const ImageShape& shape) const;

 private:
  std::string extractor_id_;
  int in_channels_;
  Eigen::MatrixXd w1_, w2_, w3_;
  Eigen::VectorXd b1_, b2_, b3_;
};

}  // namespace clog

#endif  // CLOG_FID_HPP

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

#ifndef CLOG_NN_PARAMS_HPP
#define CLOG_NN_PARAMS_HPP

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "clog/rng.hpp"

namespace clog::nn {

/// Metadata of one named parameter matrix inside the flat vector. Matrices
/// are flattened column-major at `offset`. `phase` tags which optimizer phase
/// updates the entry (0 for single-phase models; 0=discriminator,
/// 1=generator for adversarial ones).
struct ParamEntry {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;
  int phase = 0;
};

/// All trainable parameters of a model as one flat double vector plus entry
/// metadata. The flat vector is the single source of truth; layers view it
/// through Eigen maps.
class ParamStore {
 public:
  /// Registers an entry; call finalize() once after the last add.
  int add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
          int phase = 0);
  void finalize();

  Eigen::Index size() const { return flat_.size(); }
  const Eigen::VectorXd& flat() const { return flat_; }
  Eigen::VectorXd& mutable_flat() { return flat_; }

  Eigen::Map<const Eigen::MatrixXd> matrix(int id) const;
  Eigen::Map<Eigen::MatrixXd> mutable_matrix(int id);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  const ParamEntry& entry(int id) const { return entries_[static_cast<std::size_t>(id)]; }
  int find(const std::string& name) const;  // -1 if absent

  /// He-style normal init with std = gain / sqrt(fan_in); fan_in = cols.
  void init_he(int id, Rng& rng, double gain = 1.0);
  void init_normal(int id, Rng& rng, double stddev);
  void init_zero(int id);

 private:
  std::vector<ParamEntry> entries_;
  Eigen::VectorXd flat_;
  bool finalized_ = false;
};

/// Adam over a contiguous slice of the flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index begin, Eigen::Index length, double lr);

  /// params is the FULL flat vector; grad likewise. Only the slice moves.
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  Eigen::Index begin() const { return begin_; }
  Eigen::Index length() const { return length_; }
  void reset();

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  Eigen::Index begin_ = 0;
  Eigen::Index length_ = 0;
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
  Eigen::VectorXd m_, v_;
};

// Binary serialization helpers (little-endian host assumed; checkpoints are
// same-machine artifacts).
void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in);
void write_i64(std::ostream& out, long long v);
long long read_i64(std::istream& in);
void write_f64(std::ostream& out, double v);
double read_f64(std::istream& in);
void write_vec(std::ostream& out, const Eigen::VectorXd& v);
Eigen::VectorXd read_vec(std::istream& in);
void write_string(std::ostream& out, const std::string& s);
std::string read_string(std::istream& in);
void write_rng(std::ostream& out, const Rng& rng);
Rng read_rng(std::istream& in);

}  // namespace clog::nn

#endif  // CLOG_NN_PARAMS_HPP

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

#include "clog/nn/params.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "clog/errors.hpp"

namespace clog::nn {

int ParamStore::add(const std::string& name, Eigen::Index rows,
                    Eigen::Index cols, int phase) {
  check_invariant(!finalized_, "ParamStore already finalized");
  ParamEntry e;
  e.name = name;
  e.rows = rows;
  e.cols = cols;
  e.phase = phase;
  entries_.push_back(std::move(e));
  return static_cast<int>(entries_.size()) - 1;
}

void ParamStore::finalize() {
  check_invariant(!finalized_, "ParamStore already finalized");
  Eigen::Index offset = 0;
  for (auto& e : entries_) {
    e.offset = offset;
    offset += e.rows * e.cols;
  }
  flat_ = Eigen::VectorXd::Zero(offset);
  finalized_ = true;
}

Eigen::Map<const Eigen::MatrixXd> ParamStore::matrix(int id) const {
  const auto& e = entries_[static_cast<std::size_t>(id)];
  return {flat_.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<Eigen::MatrixXd> ParamStore::mutable_matrix(int id) {
  const auto& e = entries_[static_cast<std::size_t>(id)];
  return {flat_.data() + e.offset, e.rows, e.cols};
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void ParamStore::init_he(int id, Rng& rng, double gain) {
  const auto& e = entries_[static_cast<std::size_t>(id)];
  init_normal(id, rng, gain / std::sqrt(static_cast<double>(e.cols)));
}

void ParamStore::init_normal(int id, Rng& rng, double stddev) {
  auto m = mutable_matrix(id);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m(r, c) = stddev * rng.normal();
    }
  }
}

void ParamStore::init_zero(int id) { mutable_matrix(id).setZero(); }

Adam::Adam(Eigen::Index begin, Eigen::Index length, double lr)
    : begin_(begin), length_(length), lr_(lr) {
  m_ = Eigen::VectorXd::Zero(length);
  v_ = Eigen::VectorXd::Zero(length);
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  check_invariant(params.size() == grad.size(), "Adam grad size mismatch");
  ++t_;
  const auto g = grad.segment(begin_, length_);
  m_ = beta1_ * m_ + (1.0 - beta1_) * g;
  v_ = beta2_ * v_.array() + (1.0 - beta2_) * g.array().square();
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.segment(begin_, length_).array() -=
      lr_ * (m_.array() / bc1) /
      ((v_.array() / bc2).sqrt() + eps_);
}

void Adam::reset() {
  t_ = 0;
  m_.setZero();
  v_.setZero();
}

void Adam::save(std::ostream& out) const {
  write_i64(out, begin_);
  write_i64(out, length_);
  write_f64(out, lr_);
  write_i64(out, t_);
  write_vec(out, m_);
  write_vec(out, v_);
}

void Adam::load(std::istream& in) {
  begin_ = read_i64(in);
  length_ = read_i64(in);
  lr_ = read_f64(in);
  t_ = read_i64(in);
  m_ = read_vec(in);
  v_ = read_vec(in);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  check_invariant(static_cast<bool>(in), "checkpoint stream truncated");
  return v;
}

void write_i64(std::ostream& out, long long v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

long long read_i64(std::istream& in) {
  long long v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  check_invariant(static_cast<bool>(in), "checkpoint stream truncated");
  return v;
}

void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  check_invariant(static_cast<bool>(in), "checkpoint stream truncated");
  return v;
}

void write_vec(std::ostream& out, const Eigen::VectorXd& v) {
  write_i64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double)) * v.size());
}

Eigen::VectorXd read_vec(std::istream& in) {
  const long long n = read_i64(in);
  check_invariant(n >= 0, "negative vector length in checkpoint");
  Eigen::VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double)) * n);
  check_invariant(static_cast<bool>(in), "checkpoint stream truncated");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_i64(out, static_cast<long long>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const long long n = read_i64(in);
  check_invariant(n >= 0, "negative string length in checkpoint");
  std::string s(static_cast<std::size_t>(n), '\0');
  in.read(s.data(), n);
  check_invariant(static_cast<bool>(in), "checkpoint stream truncated");
  return s;
}

void write_rng(std::ostream& out, const Rng& rng) {
  for (auto word : rng.state()) write_u64(out, word);
}

Rng read_rng(std::istream& in) {
  Rng::State s;
  for (auto& word : s) word = read_u64(in);
  Rng rng;
  rng.set_state(s);
  return rng;
}

}  // namespace clog::nn

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

#ifndef CLOG_REPLAY_BUFFER_HPP
#define CLOG_REPLAY_BUFFER_HPP

#include <Eigen/Dense>
#include <vector>

#include "clog/rng.hpp"

namespace clog {

/// One stored replay sample.
struct ReplaySample {
  int condition = 0;
  Eigen::VectorXf target;
  int source_task_index = 0;
};

/// Fixed-capacity uniform sample of the seen stream (reservoir sampling,
/// Algorithm R). The buffer owns the RNG used for replacement decisions so
/// its state serializes with it.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(int capacity, std::uint64_t seed)
      : capacity_(capacity), rng_(seed) {}

  int capacity() const { return capacity_; }
  long long seen_count() const { return seen_count_; }
  const std::vector<ReplaySample>& slots() const { return slots_; }
  bool empty() const { return slots_.empty(); }

  /// Algorithm R update: append while below capacity, then replace a uniform
  /// slot with probability capacity / (seen + 1).
  void observe(ReplaySample sample);

  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }
  void set_seen_count(long long n) { seen_count_ = n; }
  std::vector<ReplaySample>& mutable_slots() { return slots_; }

 private:
  int capacity_ = 0;
  std::vector<ReplaySample> slots_;
  long long seen_count_ = 0;
  Rng rng_;
};

/// Spec-shaped free function form of ReplayBuffer::observe.
inline void reservoir_update(ReplayBuffer& buffer, ReplaySample sample) {
  buffer.observe(std::move(sample));
}

/// Draws n samples uniformly with replacement. Empty buffer is an error;
/// callers skip replay on the first task.
std::vector<ReplaySample> sample_replay_batch(const ReplayBuffer& buffer, int n,
                                              Rng& rng);

}  // namespace clog

#endif  // CLOG_REPLAY_BUFFER_HPP

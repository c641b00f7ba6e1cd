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

#include "clog/replay_buffer.hpp"

#include "clog/errors.hpp"

namespace clog {

void ReplayBuffer::observe(ReplaySample sample) {
  check_invariant(capacity_ > 0, "replay buffer capacity must be positive");
  if (static_cast<int>(slots_.size()) < capacity_) {
    slots_.push_back(std::move(sample));
  } else {
    // Keep each seen item with probability capacity / (seen + 1): draw a slot
    // index over 0..seen and replace only if it lands inside the reservoir.
    const std::uint64_t j =
        rng_.below(static_cast<std::uint64_t>(seen_count_) + 1);
    if (j < static_cast<std::uint64_t>(capacity_)) {
      slots_[static_cast<std::size_t>(j)] = std::move(sample);
    }
  }
  ++seen_count_;
}

std::vector<ReplaySample> sample_replay_batch(const ReplayBuffer& buffer, int n,
                                              Rng& rng) {
  if (n == 0) return {};
  check_invariant(!buffer.empty(), "replay batch requested from empty buffer");
  std::vector<ReplaySample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto k = rng.below(buffer.slots().size());
    out.push_back(buffer.slots()[static_cast<std::size_t>(k)]);
  }
  return out;
}

}  // namespace clog

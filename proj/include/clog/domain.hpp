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

#ifndef CLOG_DOMAIN_HPP
#define CLOG_DOMAIN_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace clog {

/// Whether smaller or larger metric values mean better generation. Selects the
/// sign convention of the forgetting rate.
enum class MetricDirection { kLowerBetter, kHigherBetter };

std::string to_string(MetricDirection d);
MetricDirection metric_direction_from_string(const std::string& s);

/// One generation task: an ordered group of class labels.
struct TaskSpec {
  int task_index = 0;  // 0-based position in the sequence
  std::vector<int> class_labels;
  std::string description;
};

/// A permutation of a dataset's class set. order_id 1 is always the identity.
struct ClassOrder {
  int order_id = 0;  // 1-based
  std::vector<int> permutation;
  std::uint64_t seed = 0;  // 0 for fixture orders shipped as data
};

/// Ordered class-incremental tasks over one dataset.
struct TaskSequence {
  std::vector<TaskSpec> tasks;
  std::string dataset_id;
  int class_order_id = 0;

  int num_tasks() const { return static_cast<int>(tasks.size()); }
};

enum class BackboneKind { kDiffusion, kGan };

std::string to_string(BackboneKind k);
BackboneKind backbone_kind_from_string(const std::string& s);

/// The twelve baseline strategy ids, in canonical order.
const std::vector<std::string>& strategy_ids();
bool is_strategy_id(const std::string& id);

/// Full description of one benchmark run. Field names are the config-file
/// schema; see config.hpp for the JSON binding.
struct RunConfig {
  std::string dataset_id;
  int classes_per_task = 2;
  BackboneKind backbone_kind = BackboneKind::kDiffusion;
  std::string strategy_id = "ncl";
  std::map<std::string, double> strategy_hyperparams;
  int train_steps_per_task = 0;
  int eval_interval_steps = 500;
  int sampler_steps = 50;
  int batch_size = 0;
  int replay_batch_size = 0;
  std::uint64_t seed = 0;
  std::vector<int> class_order_ids = {1, 2, 3, 4, 5};

  void validate() const;
  /// Hyperparameter lookup with default.
  double hyperparam(const std::string& key, double fallback) const;
};

/// Checks that permutation is a bijection on 0..n-1.
void validate_class_order(const ClassOrder& order);

/// First order is the natural 0..num_classes-1 ordering; the rest are
/// deterministic seeded shuffles.
std::vector<ClassOrder> make_class_orders(int num_classes, int num_orders,
                                          std::uint64_t seed);

/// Slices the permutation into consecutive groups of classes_per_task.
/// classes_per_task must divide the class count.
TaskSequence build_task_sequence(const ClassOrder& order, int classes_per_task,
                                 const std::string& dataset_id);

/// Published-order fixture: dataset_id -> exactly five class orders.
class ClassOrderBook {
 public:
  /// Orders bundled with the framework (the published ten-class orders plus
  /// the synthetic shapes8 set).
  static ClassOrderBook builtin();

  /// Loads the external JSON fixture {dataset_id: [[...], ...]}.
  static ClassOrderBook load(const std::string& path);

  bool has_dataset(const std::string& dataset_id) const;
  /// order_id is 1-based. Unknown dataset or order -> ConfigError.
  ClassOrder order(const std::string& dataset_id, int order_id) const;
  const std::map<std::string, std::vector<ClassOrder>>& all() const {
    return orders_;
  }

  void save(const std::string& path) const;

 private:
  std::map<std::string, std::vector<ClassOrder>> orders_;
};

}  // namespace clog

#endif  // CLOG_DOMAIN_HPP

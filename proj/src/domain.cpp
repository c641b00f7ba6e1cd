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

#include "clog/domain.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "clog/errors.hpp"
#include "clog/rng.hpp"
#include "json.hpp"

namespace clog {

std::string to_string(MetricDirection d) {
  return d == MetricDirection::kLowerBetter ? "LOWER_BETTER" : "HIGHER_BETTER";
}

MetricDirection metric_direction_from_string(const std::string& s) {
  if (s == "LOWER_BETTER") return MetricDirection::kLowerBetter;
  if (s == "HIGHER_BETTER") return MetricDirection::kHigherBetter;
  throw ConfigError("unknown metric direction: " + s);
}

std::string to_string(BackboneKind k) {
  return k == BackboneKind::kDiffusion ? "diffusion" : "gan";
}

BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "diffusion") return BackboneKind::kDiffusion;
  if (s == "gan") return BackboneKind::kGan;
  throw ConfigError("unknown backbone_kind: " + s + " (expected diffusion or gan)");
}

const std::vector<std::string>& strategy_ids() {
  static const std::vector<std::string> ids = {
      "ncl", "noncl", "ensemble", "er",  "gr",   "kd",
      "l2",  "ewc",   "si",       "mas", "agem", "clora"};
  return ids;
}

bool is_strategy_id(const std::string& id) {
  const auto& ids = strategy_ids();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

void RunConfig::validate() const {
  require(!dataset_id.empty(), "dataset_id must be set");
  require(classes_per_task > 0, "classes_per_task must be positive");
  require(is_strategy_id(strategy_id), "unknown strategy_id: " + strategy_id);
  require(train_steps_per_task > 0, "train_steps_per_task must be positive");
  require(eval_interval_steps > 0, "eval_interval_steps must be positive");
  require(eval_interval_steps <= train_steps_per_task,
          "eval_interval_steps must not exceed train_steps_per_task");
  require(sampler_steps > 0, "sampler_steps must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(replay_batch_size >= 0, "replay_batch_size must be non-negative");
  require(replay_batch_size <= batch_size,
          "replay_batch_size must not exceed batch_size");
  require(!class_order_ids.empty(), "class_order_ids must be non-empty");
  std::vector<int> seen_ids;
  for (int id : class_order_ids) {
    require(id >= 1 && id <= 5, "class_order_ids entries must be in 1..5");
    require(std::find(seen_ids.begin(), seen_ids.end(), id) == seen_ids.end(),
            "class_order_ids entries must be distinct");
    seen_ids.push_back(id);
  }
}

double RunConfig::hyperparam(const std::string& key, double fallback) const {
  auto it = strategy_hyperparams.find(key);
  return it == strategy_hyperparams.end() ? fallback : it->second;
}

void validate_class_order(const ClassOrder& order) {
  require(!order.permutation.empty(), "class order permutation is empty");
  std::vector<int> sorted = order.permutation;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != static_cast<int>(i)) {
      std::ostringstream msg;
      msg << "class order " << order.order_id
          << " is not a permutation of 0.." << sorted.size() - 1;
      throw ConfigError(msg.str());
    }
  }
}

std::vector<ClassOrder> make_class_orders(int num_classes, int num_orders,
                                          std::uint64_t seed) {
  require(num_classes > 0, "num_classes must be positive");
  require(num_orders >= 1, "num_orders must be at least 1");
  std::vector<ClassOrder> orders;
  orders.reserve(static_cast<std::size_t>(num_orders));
  for (int k = 0; k < num_orders; ++k) {
    ClassOrder order;
    order.order_id = k + 1;
    order.seed = seed;
    order.permutation.resize(static_cast<std::size_t>(num_classes));
    std::iota(order.permutation.begin(), order.permutation.end(), 0);
    if (k > 0) {
      // Fisher-Yates with a per-order derived stream; order 1 stays natural.
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
      for (int i = num_classes - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(order.permutation[static_cast<std::size_t>(i)],
                  order.permutation[static_cast<std::size_t>(j)]);
      }
    }
    validate_class_order(order);
    orders.push_back(std::move(order));
  }
  return orders;
}

TaskSequence build_task_sequence(const ClassOrder& order, int classes_per_task,
                                 const std::string& dataset_id) {
  validate_class_order(order);
  require(classes_per_task > 0, "classes_per_task must be positive");
  const int num_classes = static_cast<int>(order.permutation.size());
  if (num_classes % classes_per_task != 0) {
    std::ostringstream msg;
    msg << "classes_per_task " << classes_per_task
        << " does not divide class count " << num_classes;
    throw ConfigError(msg.str());
  }
  TaskSequence seq;
  seq.dataset_id = dataset_id;
  seq.class_order_id = order.order_id;
  const int num_tasks = num_classes / classes_per_task;
  for (int t = 0; t < num_tasks; ++t) {
    TaskSpec task;
    task.task_index = t;
    const auto begin = order.permutation.begin() + t * classes_per_task;
    task.class_labels.assign(begin, begin + classes_per_task);
    std::ostringstream desc;
    desc << "task " << t + 1 << " of " << num_tasks;
    task.description = desc.str();
    seq.tasks.push_back(std::move(task));
  }
  return seq;
}

namespace {

// Published ten-class orders used by the standard label-conditioned
// benchmarks. Order 1 is the natural sequence.
const std::vector<std::vector<int>> kTenClassOrders = {
    {0, 1, 2, 3, 4, 5, 6, 7, 8, 9},
    {3, 9, 1, 8, 0, 2, 6, 4, 5, 7},
    {6, 0, 2, 8, 1, 9, 7, 3, 5, 4},
    {2, 6, 1, 5, 9, 8, 0, 4, 3, 7},
    {1, 5, 7, 2, 0, 3, 4, 6, 8, 9},
};

// Framework-defined orders for the synthetic 4-class shapes8 set.
const std::vector<std::vector<int>> kShapes8Orders = {
    {0, 1, 2, 3}, {2, 0, 3, 1}, {1, 3, 0, 2}, {3, 2, 1, 0}, {0, 3, 1, 2},
};

std::vector<ClassOrder> to_orders(const std::vector<std::vector<int>>& perms) {
  std::vector<ClassOrder> orders;
  for (std::size_t k = 0; k < perms.size(); ++k) {
    ClassOrder order;
    order.order_id = static_cast<int>(k) + 1;
    order.permutation = perms[k];
    order.seed = 0;
    validate_class_order(order);
    orders.push_back(std::move(order));
  }
  return orders;
}

}  // namespace

ClassOrderBook ClassOrderBook::builtin() {
  ClassOrderBook book;
  book.orders_["mnist"] = to_orders(kTenClassOrders);
  book.orders_["fashion_mnist"] = to_orders(kTenClassOrders);
  book.orders_["cifar10"] = to_orders(kTenClassOrders);
  book.orders_["shapes8"] = to_orders(kShapes8Orders);
  return book;
}

ClassOrderBook ClassOrderBook::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open class order fixture: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed class order fixture " + path + ": " + e.what());
  }
  require(doc.is_object(), "class order fixture must be a JSON object");
  ClassOrderBook book;
  for (const auto& [dataset_id, orders_json] : doc.items()) {
    require(orders_json.is_array(),
            "orders for " + dataset_id + " must be an array");
    require(orders_json.size() == 5,
            "dataset " + dataset_id + " must carry exactly 5 orders, found " +
                std::to_string(orders_json.size()));
    std::vector<std::vector<int>> perms;
    for (const auto& perm : orders_json) {
      perms.push_back(perm.get<std::vector<int>>());
    }
    book.orders_[dataset_id] = to_orders(perms);
  }
  return book;
}

bool ClassOrderBook::has_dataset(const std::string& dataset_id) const {
  return orders_.count(dataset_id) > 0;
}

ClassOrder ClassOrderBook::order(const std::string& dataset_id,
                                 int order_id) const {
  auto it = orders_.find(dataset_id);
  if (it == orders_.end()) {
    throw ConfigError("no class orders for dataset: " + dataset_id);
  }
  require(order_id >= 1 && order_id <= static_cast<int>(it->second.size()),
          "class order id out of range: " + std::to_string(order_id));
  return it->second[static_cast<std::size_t>(order_id - 1)];
}

void ClassOrderBook::save(const std::string& path) const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [dataset_id, orders] : orders_) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& order : orders) arr.push_back(order.permutation);
    doc[dataset_id] = arr;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write class order fixture: " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace clog

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

#include "clog/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "clog/errors.hpp"
#include "json.hpp"

namespace clog {

namespace {

const std::set<std::string> kKnownKeys = {
    "dataset_id",        "classes_per_task",    "backbone_kind",
    "strategy_id",       "strategy_hyperparams", "train_steps_per_task",
    "eval_interval_steps", "sampler_steps",     "batch_size",
    "replay_batch_size", "seed",                "class_order_ids",
};

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require(doc.is_object(), "config must be a JSON object");

  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (!kKnownKeys.count(key)) {
      throw ConfigError("unknown config key: " + key);
    }
  }

  RunConfig config;
  try {
    require(doc.contains("dataset_id"), "config missing dataset_id");
    config.dataset_id = doc.at("dataset_id").get<std::string>();
    if (doc.contains("classes_per_task")) {
      config.classes_per_task = doc.at("classes_per_task").get<int>();
    }
    if (doc.contains("backbone_kind")) {
      config.backbone_kind =
          backbone_kind_from_string(doc.at("backbone_kind").get<std::string>());
    }
    if (doc.contains("strategy_id")) {
      config.strategy_id = doc.at("strategy_id").get<std::string>();
    }
    if (doc.contains("strategy_hyperparams")) {
      const auto& hp = doc.at("strategy_hyperparams");
      require(hp.is_object(), "strategy_hyperparams must be an object");
      for (const auto& [key, value] : hp.items()) {
        require(value.is_number(),
                "strategy_hyperparams." + key + " must be a number");
        config.strategy_hyperparams[key] = value.get<double>();
      }
    }
    require(doc.contains("train_steps_per_task"),
            "config missing train_steps_per_task");
    config.train_steps_per_task = doc.at("train_steps_per_task").get<int>();
    if (doc.contains("eval_interval_steps")) {
      config.eval_interval_steps = doc.at("eval_interval_steps").get<int>();
    }
    if (doc.contains("sampler_steps")) {
      config.sampler_steps = doc.at("sampler_steps").get<int>();
    }
    require(doc.contains("batch_size"), "config missing batch_size");
    config.batch_size = doc.at("batch_size").get<int>();
    if (doc.contains("replay_batch_size")) {
      config.replay_batch_size = doc.at("replay_batch_size").get<int>();
    }
    if (doc.contains("seed")) {
      config.seed = doc.at("seed").get<std::uint64_t>();
    }
    if (doc.contains("class_order_ids")) {
      config.class_order_ids =
          doc.at("class_order_ids").get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field has wrong type: ") + e.what());
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string run_config_to_json(const RunConfig& config) {
  nlohmann::json doc;
  doc["dataset_id"] = config.dataset_id;
  doc["classes_per_task"] = config.classes_per_task;
  doc["backbone_kind"] = to_string(config.backbone_kind);
  doc["strategy_id"] = config.strategy_id;
  doc["strategy_hyperparams"] = config.strategy_hyperparams;
  doc["train_steps_per_task"] = config.train_steps_per_task;
  doc["eval_interval_steps"] = config.eval_interval_steps;
  doc["sampler_steps"] = config.sampler_steps;
  doc["batch_size"] = config.batch_size;
  doc["replay_batch_size"] = config.replay_batch_size;
  doc["seed"] = config.seed;
  doc["class_order_ids"] = config.class_order_ids;
  return doc.dump(2) + "\n";
}

}  // namespace clog

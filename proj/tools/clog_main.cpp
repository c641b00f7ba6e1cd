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

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clog/config.hpp"
#include "clog/runner.hpp"

namespace {

int run_command(const std::string& config_path, int order_override,
                const std::string& resume_token, const std::string& output_dir,
                const std::string& data_root) {
  clog::ExperimentPlan plan;
  plan.config = clog::load_run_config(config_path);
  if (order_override != 0) {
    plan.config.class_order_ids = {order_override};
  }
  plan.output_dir = output_dir;
  plan.data_root = data_root;
  plan.resume_token = resume_token;
  const clog::ResultBundle bundle = clog::run_benchmark(plan);
  if (!bundle.complete) {
    std::cout << "run " << bundle.run_id
              << " checkpointed; resume with --resume " << bundle.run_id
              << "\n";
    return 0;
  }
  std::cout << "run " << bundle.run_id << " complete\n"
            << "bundle: " << bundle.bundle_dir << "\n"
            << "aiq: " << clog::format_stat(bundle.aggregate.aiq) << "\n"
            << "afq: " << clog::format_stat(bundle.aggregate.afq) << "\n"
            << "fr:  "
            << (bundle.aggregate.fr_defined
                    ? clog::format_stat(bundle.aggregate.fr)
                    : std::string("undefined (single task)"))
            << "\n";
  return 0;
}

int report_command(const std::string& bundle_dir, const std::string& format) {
  clog::emit_report(bundle_dir, format);
  std::cout << "report artifacts written to " << bundle_dir << "\n";
  return 0;
}

int grid_command(const std::string& config_path, const std::string& output_dir,
                 const std::string& data_root,
                 const std::vector<double>& values) {
  clog::ExperimentPlan plan;
  plan.config = clog::load_run_config(config_path);
  plan.output_dir = output_dir;
  plan.data_root = data_root;
  plan.grid = values;
  const clog::GridResult result = clog::grid_search(plan);
  std::cout << "grid target: " << result.target_key << "\n";
  for (std::size_t k = 0; k < result.values.size(); ++k) {
    std::cout << "  " << result.values[k] << " -> afq ";
    if (std::isnan(result.afqs[k])) {
      std::cout << "NA";
    } else {
      std::cout << result.afqs[k];
    }
    std::cout << "\n";
  }
  std::cout << "chosen: " << result.chosen << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual generative-model benchmark runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string resume_token;
  std::string output_dir = "results";
  std::string data_root;
  int order_override = 0;

  CLI::App* run = app.add_subcommand("run", "Train and evaluate one config");
  run->add_option("--config", config_path, "Run config JSON file")->required();
  run->add_option("--order", order_override,
                  "Restrict to a single class order id");
  run->add_option("--resume", resume_token, "Resume an interrupted run id");
  run->add_option("--output", output_dir, "Results directory");
  run->add_option("--data-root", data_root,
                  "Dataset root (default $CLOG_DATA_ROOT or ./data)");

  std::string bundle_dir;
  std::string format = "csv";
  CLI::App* report =
      app.add_subcommand("report", "Regenerate bundle report artifacts");
  report->add_option("--bundle", bundle_dir, "Bundle directory")->required();
  report->add_option("--format", format, "csv or plot");

  std::string grid_config;
  std::string grid_output = "results";
  std::string grid_data_root;
  std::vector<double> grid_values;
  CLI::App* grid =
      app.add_subcommand("grid", "Hyperparameter search on class order 1");
  grid->add_option("--config", grid_config, "Run config JSON file")
      ->required();
  grid->add_option("--output", grid_output, "Results directory");
  grid->add_option("--data-root", grid_data_root, "Dataset root");
  grid->add_option("--values", grid_values,
                   "Explicit grid values (default: 8-point ladder)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return run_command(config_path, order_override, resume_token, output_dir,
                         data_root);
    }
    if (report->parsed()) {
      return report_command(bundle_dir, format);
    }
    if (grid->parsed()) {
      return grid_command(grid_config, grid_output, grid_data_root,
                          grid_values);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

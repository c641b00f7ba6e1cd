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

#ifndef CLOG_CL_METRICS_HPP
#define CLOG_CL_METRICS_HPP

#include <string>
#include <vector>

#include "clog/domain.hpp"

namespace clog {

/// Lower-triangular matrix M[t][i] (1 <= i <= t <= T) of per-task metric
/// values: M[t][i] scores task i's data under the model that finished training
/// on task t. Cells can be NA (evaluation failed); NA poisons any aggregate
/// that reads it.
class MetricMatrix {
 public:
  MetricMatrix(int num_tasks, MetricDirection direction, std::string metric_id,
               std::string extractor_id);

  int num_tasks() const { return num_tasks_; }
  MetricDirection direction() const { return direction_; }
  const std::string& metric_id() const { return metric_id_; }
  const std::string& extractor_id() const { return extractor_id_; }

  /// t and i are 1-based with i <= t.
  void set(int t, int i, double value);
  void set_na(int t, int i);
  double at(int t, int i) const;
  bool is_na(int t, int i) const;
  /// True once every cell of row t has been assigned (value or NA).
  bool row_filled(int t) const;

  std::string to_json() const;
  static MetricMatrix from_json(const std::string& text);
  void save(const std::string& path) const;
  static MetricMatrix load(const std::string& path);

 private:
  int index(int t, int i) const;

  int num_tasks_ = 0;
  MetricDirection direction_ = MetricDirection::kLowerBetter;
  std::string metric_id_;
  std::string extractor_id_;
  std::vector<double> values_;
  std::vector<char> na_;
  std::vector<char> filled_;
};

/// Average quality after task t: mean of M[t][i] over i = 1..t.
/// NaN if any contributing cell is NA.
double average_quality(const MetricMatrix& m, int t);

/// Mean of average_quality over t = 1..T.
double average_incremental_quality(const MetricMatrix& m);

/// Final average quality: average_quality at t = T.
double average_final_quality(const MetricMatrix& m);

/// Forgetting rate over the final row: mean over t = 1..T-1 of the signed
/// degradation of task t between its own training step and the end of the
/// stream. Positive means forgetting regardless of metric direction.
/// Throws for T == 1 (undefined); NaN if any contributing cell is NA.
double forgetting_rate(const MetricMatrix& m);

/// Aggregate statistics for one metric across class orders.
struct MetricStat {
  double mean = 0.0;
  double stddev = 0.0;  // sample stddev, 0 for a single order
};

/// Scalar summary of one completed matrix.
struct EvalReport {
  std::string metric_id;
  std::string extractor_id;
  MetricDirection direction = MetricDirection::kLowerBetter;
  int num_tasks = 0;
  std::vector<double> aq;  // average_quality for t = 1..T
  double aiq = 0.0;
  double afq = 0.0;
  double fr = 0.0;
  bool fr_defined = false;  // false when T == 1
};

EvalReport make_eval_report(const MetricMatrix& m);

/// Cross-order aggregate: mean / sample-stddev of each scalar, elementwise
/// mean of the aq curves. All reports must agree on shape and metric.
struct AggregateReport {
  std::string metric_id;
  std::string extractor_id;
  MetricDirection direction = MetricDirection::kLowerBetter;
  int num_tasks = 0;
  int num_orders = 0;
  std::vector<double> aq_mean;
  MetricStat aiq;
  MetricStat afq;
  MetricStat fr;
  bool fr_defined = false;
};

AggregateReport aggregate_orders(const std::vector<EvalReport>& reports);

/// Mean and sample stddev (ddof = 1) of a value list; stddev is 0 for a
/// single value. NaN inputs poison both.
MetricStat mean_and_stddev(const std::vector<double>& values);

/// "12.345+-0.678" rendering used by summary tables; NA for NaN means.
std::string format_stat(const MetricStat& stat);

}  // namespace clog

#endif  // CLOG_CL_METRICS_HPP

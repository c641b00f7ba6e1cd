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

#include "clog/cl_metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "clog/errors.hpp"

namespace clog {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

MetricMatrix::MetricMatrix(int num_tasks, MetricDirection direction,
                           std::string metric_id, std::string extractor_id)
    : num_tasks_(num_tasks),
      direction_(direction),
      metric_id_(std::move(metric_id)),
      extractor_id_(std::move(extractor_id)) {
  require(num_tasks_ >= 1, "metric matrix needs at least 1 task");
  const int cells = num_tasks_ * (num_tasks_ + 1) / 2;
  values_.assign(cells, 0.0);
  na_.assign(cells, 0);
  filled_.assign(cells, 0);
}

int MetricMatrix::index(int t, int i) const {
  require(t >= 1 && t <= num_tasks_, "row index out of range");
  require(i >= 1 && i <= t, "column index out of range");
  return (t - 1) * t / 2 + (i - 1);
}

void MetricMatrix::set(int t, int i, double value) {
  require(std::isfinite(value), "non-finite metric values must be set as NA");
  const int k = index(t, i);
  values_[k] = value;
  na_[k] = 0;
  filled_[k] = 1;
}

void MetricMatrix::set_na(int t, int i) {
  const int k = index(t, i);
  values_[k] = 0.0;
  na_[k] = 1;
  filled_[k] = 1;
}

double MetricMatrix::at(int t, int i) const {
  const int k = index(t, i);
  check_invariant(filled_[k] != 0, "reading unfilled metric cell");
  return na_[k] ? kNaN : values_[k];
}

bool MetricMatrix::is_na(int t, int i) const { return na_[index(t, i)] != 0; }

bool MetricMatrix::row_filled(int t) const {
  for (int i = 1; i <= t; ++i) {
    if (!filled_[index(t, i)]) return false;
  }
  return true;
}

std::string MetricMatrix::to_json() const {
  nlohmann::json j;
  j["T"] = num_tasks_;
  j["direction"] = to_string(direction_);
  j["metric_id"] = metric_id_;
  j["extractor_id"] = extractor_id_;
  j["values"] = values_;
  nlohmann::json mask = nlohmann::json::array();
  for (char c : na_) mask.push_back(c != 0);
  j["na_mask"] = mask;
  return j.dump(2);
}

MetricMatrix MetricMatrix::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("invalid metric matrix JSON: ") + e.what());
  }
  require(j.contains("T") && j.contains("direction") &&
              j.contains("metric_id") && j.contains("extractor_id") &&
              j.contains("values") && j.contains("na_mask"),
          "metric matrix JSON missing required field");
  MetricMatrix m(j.at("T").get<int>(),
                 metric_direction_from_string(
                     j.at("direction").get<std::string>()),
                 j.at("metric_id").get<std::string>(),
                 j.at("extractor_id").get<std::string>());
  const auto values = j.at("values").get<std::vector<double>>();
  const auto mask = j.at("na_mask").get<std::vector<bool>>();
  const std::size_t cells = m.values_.size();
  require(values.size() == cells && mask.size() == cells,
          "metric matrix JSON has wrong cell count");
  for (std::size_t k = 0; k < cells; ++k) {
    m.values_[k] = values[k];
    m.na_[k] = mask[k] ? 1 : 0;
    m.filled_[k] = 1;
  }
  return m;
}

void MetricMatrix::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot open metric matrix file for writing: " + path);
  out << to_json() << "\n";
  require(out.good(), "failed writing metric matrix file: " + path);
}

MetricMatrix MetricMatrix::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open metric matrix file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

double average_quality(const MetricMatrix& m, int t) {
  require(t >= 1 && t <= m.num_tasks(), "average_quality row out of range");
  double sum = 0.0;
  for (int i = 1; i <= t; ++i) {
    if (m.is_na(t, i)) return kNaN;
    sum += m.at(t, i);
  }
  return sum / static_cast<double>(t);
}

double average_incremental_quality(const MetricMatrix& m) {
  double sum = 0.0;
  for (int t = 1; t <= m.num_tasks(); ++t) {
    const double aq = average_quality(m, t);
    if (std::isnan(aq)) return kNaN;
    sum += aq;
  }
  return sum / static_cast<double>(m.num_tasks());
}

double average_final_quality(const MetricMatrix& m) {
  return average_quality(m, m.num_tasks());
}

double forgetting_rate(const MetricMatrix& m) {
  const int T = m.num_tasks();
  require(T >= 2, "forgetting rate is undefined for a single task");
  double sum = 0.0;
  for (int t = 1; t <= T - 1; ++t) {
    if (m.is_na(T, t) || m.is_na(t, t)) return kNaN;
    const double degradation = m.at(T, t) - m.at(t, t);
    sum += m.direction() == MetricDirection::kLowerBetter ? degradation
                                                          : -degradation;
  }
  return sum / static_cast<double>(T - 1);
}

EvalReport make_eval_report(const MetricMatrix& m) {
  EvalReport report;
  report.metric_id = m.metric_id();
  report.extractor_id = m.extractor_id();
  report.direction = m.direction();
  report.num_tasks = m.num_tasks();
  report.aq.resize(m.num_tasks());
  for (int t = 1; t <= m.num_tasks(); ++t) {
    report.aq[t - 1] = average_quality(m, t);
  }
  report.aiq = average_incremental_quality(m);
  report.afq = average_final_quality(m);
  if (m.num_tasks() >= 2) {
    report.fr = forgetting_rate(m);
    report.fr_defined = true;
  } else {
    report.fr = kNaN;
    report.fr_defined = false;
  }
  return report;
}

MetricStat mean_and_stddev(const std::vector<double>& values) {
  require(!values.empty(), "mean_and_stddev needs at least one value");
  MetricStat stat;
  double sum = 0.0;
  for (double v : values) sum += v;
  stat.mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) {
    stat.stddev = std::isnan(stat.mean) ? kNaN : 0.0;
    return stat;
  }
  double sq = 0.0;
  for (double v : values) sq += (v - stat.mean) * (v - stat.mean);
  stat.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  return stat;
}

AggregateReport aggregate_orders(const std::vector<EvalReport>& reports) {
  require(!reports.empty(), "aggregate_orders needs at least one report");
  AggregateReport agg;
  const EvalReport& first = reports.front();
  agg.metric_id = first.metric_id;
  agg.extractor_id = first.extractor_id;
  agg.direction = first.direction;
  agg.num_tasks = first.num_tasks;
  agg.num_orders = static_cast<int>(reports.size());
  agg.fr_defined = true;
  for (const EvalReport& r : reports) {
    require(r.metric_id == first.metric_id &&
                r.extractor_id == first.extractor_id &&
                r.num_tasks == first.num_tasks,
            "aggregate_orders reports disagree on metric or shape");
    agg.fr_defined = agg.fr_defined && r.fr_defined;
  }
  agg.aq_mean.assign(first.num_tasks, 0.0);
  std::vector<double> aiqs, afqs, frs;
  for (const EvalReport& r : reports) {
    for (int t = 0; t < agg.num_tasks; ++t) {
      agg.aq_mean[t] += r.aq[t] / static_cast<double>(agg.num_orders);
    }
    aiqs.push_back(r.aiq);
    afqs.push_back(r.afq);
    if (agg.fr_defined) frs.push_back(r.fr);
  }
  agg.aiq = mean_and_stddev(aiqs);
  agg.afq = mean_and_stddev(afqs);
  agg.fr = agg.fr_defined ? mean_and_stddev(frs) : MetricStat{kNaN, kNaN};
  return agg;
}

std::string format_stat(const MetricStat& stat) {
  if (std::isnan(stat.mean)) return "NA";
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << stat.mean << "+-" << stat.stddev;
  return out.str();
}

}  // namespace clog

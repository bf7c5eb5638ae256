#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "crowdcate/scenario/dataset.hpp"
#include "crowdcate/scenario/generate.hpp"

namespace crowdcate::eval {

/// scenario x treatment; every row must have the same width.
using Table = std::vector<std::vector<double>>;

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

double rmse(const Table& predictions, const Table& truth);
/// RMS over scenarios of the error in the estimated effect of treatment i against j.
double pehe(const Table& predictions, const Table& truth, std::size_t i, std::size_t j);
/// |mean predicted effect - mean true effect|.
double ate_error(const Table& predictions, const Table& truth, std::size_t i, std::size_t j);

/// Unordered pairs i < j, lexicographic.
std::vector<std::pair<std::size_t, std::size_t>> treatment_pairs(std::size_t treatments);

struct MultiMetrics {
  double mpehe = 0.0;
  double mate = 0.0;
  std::size_t pairs = 0;
};
/// Means over every unordered pair of columns. With `required_width` set, tables of any
/// other width are rejected.
MultiMetrics multi_metrics(const Table& predictions, const Table& truth,
                           std::optional<std::size_t> required_width = std::nullopt);

struct SettingMetrics {
  double rmse = 0.0;
  double mpehe = 0.0;
  double mate = 0.0;
  std::size_t scenarios = 0;
  bool operator==(const SettingMetrics&) const = default;
};

struct MetricsReport {
  std::string method;
  scenario::Outcome outcome = scenario::Outcome::max_time;
  SettingMetrics within_sample;
  SettingMetrics out_of_sample;
  bool operator==(const MetricsReport&) const = default;
};

/// Maps occupancies to predicted 30-entry rows for one outcome component.
using Predictor = std::function<Table(const std::vector<sim::Occupancy>&)>;

/// Noiseless table of one outcome component for the given records.
Table truth_table(const scenario::Dataset& dataset, const std::vector<std::size_t>& rows, scenario::Outcome outcome);

/// Within-sample over split.train, out-of-sample over split.test. Only the noiseless tables
/// are read. Throws MetricsError when `model_layout_hash` differs from the dataset's.
MetricsReport evaluate(const Predictor& predictor, const std::string& method, const std::string& model_layout_hash,
                       const scenario::Dataset& dataset, const scenario::EvaluationSplit& split,
                       scenario::Outcome outcome);

struct PairedComparison {
  std::size_t n = 0;
  double mean_difference = 0.0;  // mean(a - b)
  bool degenerate = false;       // differences have zero variance
  std::optional<double> t_statistic;
  std::optional<double> p_value;  // two-sided
};
PairedComparison paired_compare(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace crowdcate::eval

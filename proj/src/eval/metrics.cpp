#include "crowdcate/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

namespace crowdcate::eval {

namespace {

std::size_t check_aligned(const Table& predictions, const Table& truth) {
  if (predictions.size() != truth.size()) {
    throw MetricsError(fmt::format("tables have {} and {} scenarios", predictions.size(), truth.size()));
  }
  if (truth.empty()) throw MetricsError("tables are empty");
  const std::size_t width = truth.front().size();
  for (std::size_t s = 0; s < truth.size(); ++s) {
    if (truth[s].size() != width || predictions[s].size() != width) {
      throw MetricsError(fmt::format("scenario {} has a row of the wrong width (expected {})", s, width));
    }
  }
  return width;
}

void check_pair(std::size_t width, std::size_t i, std::size_t j) {
  if (i >= width || j >= width) throw MetricsError(fmt::format("unknown treatment in pair ({}, {})", i, j));
  if (i == j) throw MetricsError("pair needs two distinct treatments");
}

double effect_error(const Table& p, const Table& t, std::size_t s, std::size_t i, std::size_t j) {
  return (p[s][i] - p[s][j]) - (t[s][i] - t[s][j]);
}

}  // namespace

double rmse(const Table& predictions, const Table& truth) {
  const std::size_t width = check_aligned(predictions, truth);
  double sq = 0.0;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    for (std::size_t k = 0; k < width; ++k) sq += (predictions[s][k] - truth[s][k]) * (predictions[s][k] - truth[s][k]);
  }
  return std::sqrt(sq / static_cast<double>(truth.size() * width));
}

double pehe(const Table& predictions, const Table& truth, std::size_t i, std::size_t j) {
  check_pair(check_aligned(predictions, truth), i, j);
  double sq = 0.0;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    const double e = effect_error(predictions, truth, s, i, j);
    sq += e * e;
  }
  return std::sqrt(sq / static_cast<double>(truth.size()));
}

double ate_error(const Table& predictions, const Table& truth, std::size_t i, std::size_t j) {
  check_pair(check_aligned(predictions, truth), i, j);
  double sum = 0.0;
  for (std::size_t s = 0; s < truth.size(); ++s) sum += effect_error(predictions, truth, s, i, j);
  return std::abs(sum / static_cast<double>(truth.size()));
}

std::vector<std::pair<std::size_t, std::size_t>> treatment_pairs(std::size_t treatments) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < treatments; ++i) {
    for (std::size_t j = i + 1; j < treatments; ++j) out.emplace_back(i, j);
  }
  return out;
}

MultiMetrics multi_metrics(const Table& predictions, const Table& truth, std::optional<std::size_t> required_width) {
  const std::size_t width = check_aligned(predictions, truth);
  if (required_width && width != *required_width) {
    throw MetricsError(fmt::format("incomplete table: {} treatments, expected {}", width, *required_width));
  }
  if (width < 2) throw MetricsError("need at least two treatments");
  MultiMetrics m;
  for (const auto& [i, j] : treatment_pairs(width)) {
    m.mpehe += pehe(predictions, truth, i, j);
    m.mate += ate_error(predictions, truth, i, j);
    ++m.pairs;
  }
  m.mpehe /= static_cast<double>(m.pairs);
  m.mate /= static_cast<double>(m.pairs);
  return m;
}

Table truth_table(const scenario::Dataset& dataset, const std::vector<std::size_t>& rows, scenario::Outcome outcome) {
  Table t;
  t.reserve(rows.size());
  for (std::size_t r : rows) {
    const auto& rec = dataset.records.at(r);
    if (!rec.has_table()) {
      throw MetricsError(fmt::format("scenario {} has no ground-truth table", rec.scenario_id));
    }
    std::vector<double> row(rec.table.size());
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = rec.table[k].get(outcome);
    t.push_back(std::move(row));
  }
  return t;
}

namespace {

SettingMetrics setting_metrics(const Predictor& predictor, const scenario::Dataset& dataset,
                               const std::vector<std::size_t>& rows, scenario::Outcome outcome) {
  SettingMetrics m;
  if (rows.empty()) return m;
  const Table truth = truth_table(dataset, rows, outcome);
  std::vector<sim::Occupancy> xs;
  xs.reserve(rows.size());
  for (std::size_t r : rows) xs.push_back(dataset.records[r].occupancy);
  const Table pred = predictor(xs);
  const MultiMetrics mm = multi_metrics(pred, truth, scenario::kTreatmentCount);
  m.rmse = rmse(pred, truth);
  m.mpehe = mm.mpehe;
  m.mate = mm.mate;
  m.scenarios = rows.size();
  return m;
}

}  // namespace

MetricsReport evaluate(const Predictor& predictor, const std::string& method, const std::string& model_layout_hash,
                       const scenario::Dataset& dataset, const scenario::EvaluationSplit& split,
                       scenario::Outcome outcome) {
  if (model_layout_hash != dataset.manifest.layout_hash) {
    throw MetricsError(fmt::format("layout hash mismatch: model {} vs dataset {}", model_layout_hash,
                                   dataset.manifest.layout_hash));
  }
  MetricsReport r;
  r.method = method;
  r.outcome = outcome;
  r.within_sample = setting_metrics(predictor, dataset, split.train, outcome);
  r.out_of_sample = setting_metrics(predictor, dataset, split.test, outcome);
  return r;
}

PairedComparison paired_compare(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw MetricsError("paired lists differ in length");
  if (a.size() < 2) throw MetricsError("paired comparison needs at least two pairs");
  PairedComparison c;
  c.n = a.size();
  const double n = static_cast<double>(c.n);
  for (std::size_t i = 0; i < a.size(); ++i) c.mean_difference += (a[i] - b[i]) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - c.mean_difference;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  double scale = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  // Rounding in a - b leaves ~1e-16 jitter on exactly-constant differences.
  if (!(sd > 1e-13 * scale)) {
    c.degenerate = true;
    return c;
  }
  const double t = c.mean_difference / (sd / std::sqrt(n));
  boost::math::students_t dist(n - 1.0);
  c.t_statistic = t;
  c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return c;
}

}  // namespace crowdcate::eval

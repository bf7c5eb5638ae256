#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdcate/eval/metrics.hpp"

namespace crowdcate::eval {

struct ReportEntry {
  std::uint64_t seed = 0;
  MetricsReport report;
};

/// One JSON object per (entry, setting), newline-terminated.
std::string to_jsonl(const std::vector<ReportEntry>& entries);
std::vector<ReportEntry> entries_from_jsonl(const std::string& text);

/// Column order: within rmse, mpehe, mate, then out-of-sample rmse, mpehe, mate.
inline constexpr std::size_t kMetricColumns = 6;
std::array<double, kMetricColumns> metric_columns(const MetricsReport& report);
const std::array<const char*, kMetricColumns>& metric_column_names();

struct MethodSummary {
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::array<double, kMetricColumns> mean{};
  std::array<double, kMetricColumns> sd{};  // sample sd, 0 for one seed
};

/// Methods in first-appearance order, restricted to one outcome component.
std::vector<MethodSummary> summarize(const std::vector<ReportEntry>& entries, scenario::Outcome outcome);

/// Per-seed out-of-sample mPEHE for `method`, in seed order.
std::vector<std::pair<std::uint64_t, double>> out_of_sample_mpehe(const std::vector<ReportEntry>& entries,
                                                                  const std::string& method,
                                                                  scenario::Outcome outcome);

/// Paired test on out-of-sample mPEHE, when exactly two methods share at least two seeds.
struct PairedColumn {
  std::string method_a, method_b;
  PairedComparison comparison;
};
std::optional<PairedColumn> paired_column(const std::vector<ReportEntry>& entries, scenario::Outcome outcome);

/// Fixed-width text table: one row per method, mean ± sd per metric.
std::string render_table(const std::vector<ReportEntry>& entries, scenario::Outcome outcome);

}  // namespace crowdcate::eval

#include "crowdcate/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>
#include <sstream>

#include <fmt/format.h>

namespace crowdcate::eval {

using nlohmann::json;

namespace {

json setting_json(const ReportEntry& e, const char* setting, const SettingMetrics& m) {
  return {{"method", e.report.method},
          {"seed", e.seed},
          {"outcome", scenario::to_string(e.report.outcome)},
          {"setting", setting},
          {"rmse", m.rmse},
          {"mpehe", m.mpehe},
          {"mate", m.mate},
          {"scenarios", m.scenarios}};
}

}  // namespace

std::string to_jsonl(const std::vector<ReportEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += setting_json(e, "within_sample", e.report.within_sample).dump() + "\n";
    out += setting_json(e, "out_of_sample", e.report.out_of_sample).dump() + "\n";
  }
  return out;
}

std::vector<ReportEntry> entries_from_jsonl(const std::string& text) {
  std::vector<ReportEntry> out;
  std::map<std::tuple<std::string, std::uint64_t, std::string>, std::size_t> index;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto key = std::make_tuple(j.at("method").get<std::string>(), j.at("seed").get<std::uint64_t>(),
                                       j.at("outcome").get<std::string>());
      auto it = index.find(key);
      if (it == index.end()) {
        ReportEntry e;
        e.seed = std::get<1>(key);
        e.report.method = std::get<0>(key);
        e.report.outcome = scenario::parse_outcome(std::get<2>(key));
        it = index.emplace(key, out.size()).first;
        out.push_back(e);
      }
      SettingMetrics m{j.at("rmse").get<double>(), j.at("mpehe").get<double>(), j.at("mate").get<double>(),
                       j.at("scenarios").get<std::size_t>()};
      const std::string setting = j.at("setting").get<std::string>();
      if (setting == "within_sample") {
        out[it->second].report.within_sample = m;
      } else if (setting == "out_of_sample") {
        out[it->second].report.out_of_sample = m;
      } else {
        throw MetricsError("unknown setting '" + setting + "'");
      }
    } catch (const std::exception& ex) {
      throw MetricsError(fmt::format("report line {}: {}", lineno, ex.what()));
    }
  }
  return out;
}

std::array<double, kMetricColumns> metric_columns(const MetricsReport& r) {
  return {r.within_sample.rmse, r.within_sample.mpehe, r.within_sample.mate,
          r.out_of_sample.rmse, r.out_of_sample.mpehe, r.out_of_sample.mate};
}

const std::array<const char*, kMetricColumns>& metric_column_names() {
  static const std::array<const char*, kMetricColumns> names{"in RMSE", "in mPEHE", "in mATE",
                                                             "out RMSE", "out mPEHE", "out mATE"};
  return names;
}

std::vector<MethodSummary> summarize(const std::vector<ReportEntry>& entries, scenario::Outcome outcome) {
  std::vector<MethodSummary> out;
  std::vector<std::vector<std::array<double, kMetricColumns>>> values;
  for (const auto& e : entries) {
    if (e.report.outcome != outcome) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const MethodSummary& s) { return s.method == e.report.method; });
    if (it == out.end()) {
      out.push_back({e.report.method, {}, {}, {}});
      values.emplace_back();
      it = out.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - out.begin());
    it->seeds.push_back(e.seed);
    values[k].push_back(metric_columns(e.report));
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& v = values[k];
    const double n = static_cast<double>(v.size());
    for (std::size_t c = 0; c < kMetricColumns; ++c) {
      double mean = 0.0;
      for (const auto& row : v) mean += row[c] / n;
      double ss = 0.0;
      for (const auto& row : v) ss += (row[c] - mean) * (row[c] - mean);
      out[k].mean[c] = mean;
      out[k].sd[c] = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
  }
  return out;
}

std::vector<std::pair<std::uint64_t, double>> out_of_sample_mpehe(const std::vector<ReportEntry>& entries,
                                                                  const std::string& method,
                                                                  scenario::Outcome outcome) {
  std::vector<std::pair<std::uint64_t, double>> out;
  for (const auto& e : entries) {
    if (e.report.method == method && e.report.outcome == outcome) out.emplace_back(e.seed, e.report.out_of_sample.mpehe);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<PairedColumn> paired_column(const std::vector<ReportEntry>& entries, scenario::Outcome outcome) {
  const auto methods = summarize(entries, outcome);
  if (methods.size() != 2) return std::nullopt;
  const auto a = out_of_sample_mpehe(entries, methods[0].method, outcome);
  const auto b = out_of_sample_mpehe(entries, methods[1].method, outcome);
  std::vector<double> va, vb;
  for (const auto& [seed, value] : a) {
    const auto it = std::find_if(b.begin(), b.end(), [&](const auto& p) { return p.first == seed; });
    if (it == b.end()) continue;
    va.push_back(value);
    vb.push_back(it->second);
  }
  if (va.size() < 2) return std::nullopt;
  return PairedColumn{methods[0].method, methods[1].method, paired_compare(va, vb)};
}

std::string render_table(const std::vector<ReportEntry>& entries, scenario::Outcome outcome) {
  const auto methods = summarize(entries, outcome);
  const auto paired = paired_column(entries, outcome);
  std::string out = fmt::format("outcome: {}\n", scenario::to_string(outcome));
  out += fmt::format("{:<12} {:>5}", "method", "seeds");
  for (const char* name : metric_column_names()) out += fmt::format(" {:>17}", name);
  if (paired) out += fmt::format("  {}", "paired t-test (out mPEHE)");
  out += "\n";
  for (std::size_t k = 0; k < methods.size(); ++k) {
    const auto& m = methods[k];
    out += fmt::format("{:<12} {:>5}", m.method, m.seeds.size());
    for (std::size_t c = 0; c < kMetricColumns; ++c) {
      out += m.seeds.size() > 1 ? fmt::format(" {:>8.3f} ± {:<6.3f}", m.mean[c], m.sd[c])
                                : fmt::format(" {:>17.3f}", m.mean[c]);
    }
    if (paired) {
      if (k == 0) {
        const auto& c = paired->comparison;
        out += c.degenerate ? fmt::format("  vs {}: diff {:.3f}, degenerate", paired->method_b, c.mean_difference)
                            : fmt::format("  vs {}: diff {:.3f}, t {:.3f}, p {:.4g}", paired->method_b,
                                          c.mean_difference, *c.t_statistic, *c.p_value);
      } else {
        out += "  -";
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace crowdcate::eval

#include "crowdcate/app/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include <boost/algorithm/string/trim.hpp>
#include <fmt/format.h>

#include "crowdcate/common/digest.hpp"

namespace crowdcate::app {

ConfigError::ConfigError(const std::string& source, std::size_t line, const std::string& field, const std::string& what)
    : UsageError(field.empty() ? fmt::format("{}:{}: {}", source, line, what)
                               : fmt::format("{}:{}: field '{}': {}", source, line, field, what)),
      line_(line),
      field_(field) {}

namespace {

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_unsigned(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

std::string fmt_list(const std::vector<double>& xs) {
  std::string out;
  for (double x : xs) out += (out.empty() ? "" : ",") + fmt::format("{}", x);
  return out;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define CC_DOUBLE(name, expr) \
  {name, {[](ExperimentConfig& c, const std::string& v) { expr = to_double(v); }, \
          [](const ExperimentConfig& c) { return fmt::format("{}", expr); }}}
#define CC_SIZE(name, expr) \
  {name, {[](ExperimentConfig& c, const std::string& v) { expr = static_cast<std::size_t>(to_unsigned(v)); }, \
          [](const ExperimentConfig& c) { return fmt::format("{}", expr); }}}

// Ordered so to_config_text is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table{
      {"occupancy_rates",
       {[](ExperimentConfig& c, const std::string& v) { c.gen.occupancy_rates = parse_number_list(v, "occupancy_rates"); },
        [](const ExperimentConfig& c) { return fmt_list(c.gen.occupancy_rates); }}},
      CC_SIZE("seeds_per_rate_combo", c.gen.seeds_per_rate_combo),
      CC_SIZE("min_people", c.gen.min_people),
      CC_DOUBLE("noise_std", c.gen.noise_std),
      CC_DOUBLE("door_radius_m", c.gen.door_radius_m),
      CC_DOUBLE("cell_pitch_m", c.gen.cell_pitch_m),
      CC_SIZE("max_combos", c.gen.max_combos),
      CC_SIZE("capacity_full", c.sim.capacity_full),
      CC_SIZE("capacity_half", c.sim.capacity_half),
      CC_SIZE("tick_limit", c.sim.tick_limit),
      {"agent_priority_rule",
       {[](ExperimentConfig&, const std::string& v) {
          if (v != "nearest_first") throw std::invalid_argument("only 'nearest_first' is supported");
        },
        [](const ExperimentConfig&) { return std::string("nearest_first"); }}},
      CC_DOUBLE("ipm_weight", c.train.ipm_weight),
      CC_SIZE("batch_size", c.train.batch_size),
      CC_SIZE("epochs", c.train.epochs),
      {"mmd_kernel",
       {[](ExperimentConfig& c, const std::string& v) {
          if (v == "linear") {
            c.train.mmd.kernel = model::MmdKernel::linear;
          } else if (v == "rbf") {
            c.train.mmd.kernel = model::MmdKernel::rbf;
          } else {
            throw std::invalid_argument("expected 'linear' or 'rbf', got '" + v + "'");
          }
        },
        [](const ExperimentConfig& c) {
          return std::string(c.train.mmd.kernel == model::MmdKernel::linear ? "linear" : "rbf");
        }}},
      CC_DOUBLE("mmd_bandwidth", c.train.mmd.bandwidth),
      CC_SIZE("min_group_size", c.train.min_group_size),
      CC_DOUBLE("learning_rate", c.train.adam.learning_rate),
      CC_DOUBLE("beta1", c.train.adam.beta1),
      CC_DOUBLE("beta2", c.train.adam.beta2),
      CC_DOUBLE("epsilon", c.train.adam.epsilon),
      CC_DOUBLE("validation_fraction", c.train.validation_fraction),
      {"seed",
       {[](ExperimentConfig& c, const std::string& v) { c.train.seed = to_unsigned(v); },
        [](const ExperimentConfig& c) { return fmt::format("{}", c.train.seed); }}},
      CC_DOUBLE("train_fraction", c.train_fraction),
  };
  return table;
}

#undef CC_DOUBLE
#undef CC_SIZE

}  // namespace

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    boost::algorithm::trim(item);
    try {
      out.push_back(to_double(item));
    } catch (const std::invalid_argument& e) {
      throw UsageError(fmt::format("{}: {}", what, e.what()));
    }
  }
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t last_line = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    boost::algorithm::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, lineno, "", "expected 'key = value'");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    boost::algorithm::trim(key);
    boost::algorithm::trim(value);
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
    if (it == table.end()) throw ConfigError(source, lineno, key, "unknown key");
    if (value.empty()) throw ConfigError(source, lineno, key, "missing value");
    try {
      it->second.set(base, value);
    } catch (const std::exception& e) {
      throw ConfigError(source, lineno, key, e.what());
    }
    last_line = lineno;
  }
  // Cross-field checks report against the last assignment.
  try {
    base.gen.validate();
  } catch (const std::exception& e) {
    throw ConfigError(source, last_line, "", e.what());
  }
  try {
    base.sim.validate();
  } catch (const std::exception& e) {
    throw ConfigError(source, last_line, "", e.what());
  }
  try {
    base.train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(source, last_line, "", e.what());
  }
  if (!(base.train_fraction > 0.0 && base.train_fraction < 1.0)) {
    throw ConfigError(source, last_line, "train_fraction", "must be in (0, 1)");
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("config file not found: " + path.string());
  return parse_config(read_file(path), path.string());
}

std::string to_config_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace crowdcate::app

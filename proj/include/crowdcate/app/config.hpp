#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "crowdcate/model/train.hpp"
#include "crowdcate/scenario/generate.hpp"
#include "crowdcate/sim/simulate.hpp"

namespace crowdcate::app {

/// Usage or validation problem; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public UsageError {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& field, const std::string& what);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

struct ExperimentConfig {
  scenario::GenConfig gen;
  sim::SimConfig sim;
  model::TrainConfig train;
  double train_fraction = 0.9;
};

/// Flat "key = value" lines; '#' starts a comment. Keys are the GenConfig / SimConfig /
/// TrainConfig field names (learning_rate, beta1, ... for the optimizer). Later keys win.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>",
                              ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_config_text(const ExperimentConfig& config);

/// "0.1,0.5,0.9" -> {0.1, 0.5, 0.9}; throws UsageError naming `what`.
std::vector<double> parse_number_list(const std::string& text, const std::string& what);

}  // namespace crowdcate::app

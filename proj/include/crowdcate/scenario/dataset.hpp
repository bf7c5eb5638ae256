#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdcate/scenario/generate.hpp"
#include "crowdcate/sim/simulate.hpp"

namespace crowdcate::scenario {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetManifest {
  GenConfig gen;
  sim::SimConfig sim;
  std::uint64_t master_seed = 0;
  std::string layout_hash;
  std::size_t seat_count = sim::kDefaultSeatCount;
  std::size_t scenarios = 0;
  std::size_t dropped = 0;
  bool ground_truth = true;
  std::string records_sha256;  // filled in by write_dataset
  std::string run_id;          // hash of the run manifest that produced the file
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<ScenarioRecord> records;
};

nlohmann::json to_json(const GenConfig& config);
GenConfig gen_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const sim::SimConfig& config);
sim::SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// sha256 of the canonical gen_config JSON.
std::string gen_config_hash(const GenConfig& config);

nlohmann::json record_to_json(const ScenarioRecord& record, bool with_table);
ScenarioRecord record_from_json(const nlohmann::json& j, std::size_t seats);

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);

/// Writes the JSON-lines file and its "<path>.manifest.json" sidecar. Without ground truth
/// the tables are stripped and the manifest says so.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset, bool with_ground_truth = true);
std::string dataset_text(const Dataset& dataset, bool with_ground_truth);
Dataset read_dataset(const std::filesystem::path& path);

/// Scenario-level split: a seeded permutation, the first round(fraction * n) go to train.
struct EvaluationSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t split_seed = 0;
};
EvaluationSplit split_scenarios(std::size_t n, std::uint64_t split_seed, double train_fraction = 0.9);

}  // namespace crowdcate::scenario

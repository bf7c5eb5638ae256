#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdcate/app/config.hpp"
#include "crowdcate/eval/report.hpp"
#include "crowdcate/model/estimator.hpp"
#include "crowdcate/scenario/dataset.hpp"

namespace crowdcate::app {

/// Provenance for one command invocation. run_id hashes everything except the outputs and
/// the wall-clock time, so the artifacts that embed it stay reproducible.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();   // name -> sha256
  nlohmann::json outputs = nlohmann::json::object();  // name -> sha256
  nlohmann::json notes = nlohmann::json::object();    // not hashed
  double wall_clock_seconds = 0.0;

  std::string run_id() const;
  nlohmann::json to_json() const;
};
/// Writes "<artifact>.run.json".
void write_run_manifest(const std::filesystem::path& artifact, const RunManifest& manifest);

using Progress = std::function<void(const std::string&)>;

const sim::TheaterLayout& default_layout();
/// Throws UsageError if the dataset was built on another layout.
void check_layout(const scenario::Dataset& dataset);

model::TrainingSet factual_training_set(const scenario::Dataset& dataset, const std::vector<std::size_t>& rows,
                                        scenario::Outcome outcome);

// ---- generate

struct GenerateOptions {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  bool ground_truth = true;
  std::size_t jobs = 0;
};
struct GenerateOutcome {
  scenario::Dataset dataset;
  std::string run_id;
};
GenerateOutcome run_generate(const GenerateOptions& options);

// ---- train

struct TrainOptions {
  std::filesystem::path dataset;
  model::ModelKind kind = model::ModelKind::sccfr;
  scenario::Outcome outcome = scenario::Outcome::max_time;
  std::optional<double> lambda;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> split_seed;  // defaults to seed
  std::filesystem::path out;
  ExperimentConfig config;
};
struct TrainOutcome {
  model::FitResult fit;
  std::string run_id;
};
TrainOutcome run_train(const TrainOptions& options);

/// Trains on the factual fields of the split's training scenarios and stamps the manifest
/// (outcome, dataset hashes, split) plus its run_id into the estimator.
model::FitResult train_on_split(const scenario::Dataset& dataset, const scenario::EvaluationSplit& split,
                                model::ModelKind kind, scenario::Outcome outcome, std::optional<double> lambda,
                                const ExperimentConfig& config, std::uint64_t seed);

// ---- evaluate

struct EvaluateOptions {
  std::filesystem::path dataset;
  std::vector<std::filesystem::path> checkpoints;
  bool oracle = false;  // adds a simulator-backed row
  scenario::Outcome oracle_outcome = scenario::Outcome::max_time;
  std::uint64_t oracle_split_seed = 0;
  double train_fraction = 0.9;
  std::optional<std::filesystem::path> report;  // writes <report> text and <report>.jsonl
};
struct EvaluateOutcome {
  std::vector<eval::ReportEntry> entries;
  std::string table;
};
EvaluateOutcome run_evaluate(const EvaluateOptions& options);

eval::MetricsReport evaluate_estimator(const model::Estimator& estimator, const scenario::Dataset& dataset,
                                       const scenario::EvaluationSplit& split);

// ---- bench

struct BenchOptions {
  ExperimentConfig config;
  std::uint64_t master_seed = 7;
  std::size_t seeds = 1;
  std::size_t jobs = 0;
  std::vector<scenario::Outcome> outcomes{scenario::Outcome::max_time, scenario::Outcome::mean_time,
                                          scenario::Outcome::std_time};
  std::vector<model::ModelKind> methods{model::ModelKind::sccfr, model::ModelKind::sctarnet, model::ModelKind::cfr,
                                        model::ModelKind::tarnet, model::ModelKind::mlp,     model::ModelKind::ridge};
  std::optional<std::filesystem::path> out_dir;
  Progress progress;
};

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
  std::string line() const;
};

struct BenchOutcome {
  std::size_t scenarios = 0;
  std::size_t dropped = 0;
  std::vector<eval::ReportEntry> entries;
  std::vector<Verdict> verdicts;
  std::string report;
  bool all_pass() const;
};
BenchOutcome run_bench(const BenchOptions& options);

/// Headline uses the first five seeds; ablation uses every seed. Needs the max-time outcome.
std::vector<Verdict> bench_verdicts(const std::vector<eval::ReportEntry>& entries, std::size_t scenarios);

}  // namespace crowdcate::app

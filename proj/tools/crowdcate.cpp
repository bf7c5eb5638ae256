// crowdcate: generate, train, evaluate, bench, serve.
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "crowdcate/app/commands.hpp"
#include "crowdcate/common/alloc.hpp"
#include "crowdcate/serve/service.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
// After Eigen: <resolv.h> (pulled in here) defines a `_res` macro that breaks Eigen's headers.
#include <httplib.h>

namespace app = crowdcate::app;
namespace model = crowdcate::model;
namespace scenario = crowdcate::scenario;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct Settings {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t jobs = 0;

  std::string rates;
  std::optional<std::size_t> combos, seeds_per_combo, min_people;
  std::optional<double> noise;
  bool no_ground_truth = false;

  std::string dataset;
  std::string model_name = "sccfr";
  std::string outcome = "max";
  std::optional<double> lambda;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::size_t> epochs;

  std::vector<std::string> checkpoints;
  bool oracle = false;
  std::string report;

  std::size_t bench_seeds = 1;
  std::uint64_t master_seed = 7;
  std::vector<std::string> outcomes{"max", "mean", "std"};
  std::vector<std::string> methods;

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
  std::size_t budget_ms = 10000;
};

app::ExperimentConfig resolve_config(const Settings& s) {
  app::ExperimentConfig c = s.config.empty() ? app::ExperimentConfig{} : app::load_config(s.config);
  if (!s.rates.empty()) c.gen.occupancy_rates = app::parse_number_list(s.rates, "--rates");
  if (s.combos) c.gen.max_combos = *s.combos;
  if (s.seeds_per_combo) c.gen.seeds_per_rate_combo = *s.seeds_per_combo;
  if (s.min_people) c.gen.min_people = *s.min_people;
  if (s.noise) c.gen.noise_std = *s.noise;
  if (s.epochs) c.train.epochs = *s.epochs;
  try {
    c.gen.validate();
    c.sim.validate();
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw app::UsageError(e.what());
  }
  return c;
}

scenario::Outcome outcome_arg(const std::string& name) {
  try {
    return scenario::parse_outcome(name);
  } catch (const std::exception&) {
    throw app::UsageError(fmt::format("unknown outcome '{}' (valid: max, mean, std)", name));
  }
}

model::ModelKind model_arg(const std::string& name) {
  try {
    return model::parse_model_kind(name);
  } catch (const std::invalid_argument& e) {
    throw app::UsageError(e.what());
  }
}

void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::exists(path)) throw app::UsageError(fmt::format("{} not found: {}", what, path));
}

int cmd_generate(const Settings& s) {
  app::GenerateOptions o;
  o.config = resolve_config(s);
  o.seed = s.seed;
  o.out = s.out;
  o.ground_truth = !s.no_ground_truth;
  o.jobs = s.jobs;
  const auto r = app::run_generate(o);
  fmt::print("scenarios: {}\ndropped: {}\nrun id: {}\n", r.dataset.records.size(), r.dataset.manifest.dropped,
             r.run_id);
  return 0;
}

int cmd_train(const Settings& s) {
  app::TrainOptions o;
  o.kind = model_arg(s.model_name);
  o.outcome = outcome_arg(s.outcome);
  require_file(s.dataset, "dataset");
  o.dataset = s.dataset;
  o.config = resolve_config(s);
  o.lambda = s.lambda;
  o.seed = s.seed;
  o.split_seed = s.split_seed;
  o.out = s.out;
  const auto r = app::run_train(o);
  for (const auto& t : r.fit.lambda_trials) {
    if (r.fit.lambda_trials.size() > 1) fmt::print("lambda {}: validation mse {:.4f}\n", t.lambda, t.validation_mse);
  }
  fmt::print("method: {}\n", r.fit.estimator.method_label());
  if (r.fit.estimator.family() == model::Estimator::Family::network) {
    fmt::print("best epoch: {} (validation mse {:.4f})\n", r.fit.log.best_epoch, r.fit.log.best_validation_mse);
  }
  fmt::print("run id: {}\n", r.run_id);
  return 0;
}

int cmd_evaluate(const Settings& s) {
  app::EvaluateOptions o;
  require_file(s.dataset, "dataset");
  o.dataset = s.dataset;
  for (const auto& c : s.checkpoints) {
    require_file(c, "checkpoint");
    o.checkpoints.emplace_back(c);
  }
  o.oracle = s.oracle;
  o.oracle_outcome = outcome_arg(s.outcome);
  o.oracle_split_seed = s.split_seed.value_or(s.seed);
  o.train_fraction = resolve_config(s).train_fraction;
  if (!s.report.empty()) o.report = s.report;
  const auto r = app::run_evaluate(o);
  std::fputs(r.table.c_str(), stdout);
  return 0;
}

int cmd_bench(const Settings& s) {
  app::BenchOptions o;
  o.config = resolve_config(s);
  o.master_seed = s.master_seed;
  o.seeds = s.bench_seeds;
  o.jobs = s.jobs;
  o.outcomes.clear();
  for (const auto& name : s.outcomes) o.outcomes.push_back(outcome_arg(name));
  if (!s.methods.empty()) {
    o.methods.clear();
    for (const auto& name : s.methods) o.methods.push_back(model_arg(name));
  }
  if (!s.out.empty()) o.out_dir = s.out;
  o.progress = [](const std::string& msg) { fmt::print(stderr, "{}\n", msg); };
  const auto r = app::run_bench(o);
  std::fputs(r.report.c_str(), stdout);
  return r.all_pass() ? 0 : kRuntimeFailure;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const Settings& s) {
  crowdcate::serve::WhatIfService service(std::chrono::milliseconds(s.budget_ms));
  if (s.oracle) {
    service.load_oracle();
  } else if (s.checkpoints.size() == 3) {
    for (const auto& c : s.checkpoints) require_file(c, "checkpoint");
    service.load_checkpoints({s.checkpoints[0], s.checkpoints[1], s.checkpoints[2]});
  } else if (!s.checkpoints.empty()) {
    throw app::UsageError("serve needs three checkpoints: max, mean, std");
  }
  httplib::Server server;
  crowdcate::serve::install_routes(server, service, s.cors_origin);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  fmt::print(stderr, "listening on {}:{} ({})\n", s.host, s.port, service.ready() ? "ready" : "no models loaded");
  if (!server.listen(s.host, s.port)) {
    fmt::print(stderr, "error: cannot listen on {}:{}\n", s.host, s.port);
    return kRuntimeFailure;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  crowdcate::tune_allocator();
  Settings s;
  CLI::App cli{"Crowd-evacuation guidance: datasets, treatment-effect models, evaluation"};
  cli.require_subcommand(1);
  cli.set_version_flag("--version", "crowdcate 1.0");

  auto jobs_opt = [&](CLI::App* sub) {
    sub->add_option("--jobs", s.jobs, "Worker threads (0 = all cores)")->envname("CROWD_CATE_JOBS");
  };
  auto gen_opts = [&](CLI::App* sub, const std::string& seeds_flag) {
    sub->add_option("--config", s.config, "Flat key = value config file");
    sub->add_option("--rates", s.rates, "Comma-separated occupancy rate set, e.g. 0.1,0.5,0.9");
    sub->add_option("--combos", s.combos, "Use only the first N rate combinations");
    sub->add_option(seeds_flag, s.seeds_per_combo, "Scenarios per rate combination");
    sub->add_option("--min-people", s.min_people, "Drop scenarios with fewer occupants");
    sub->add_option("--noise", s.noise, "Outcome noise standard deviation");
  };

  auto* gen = cli.add_subcommand("generate", "Simulate an observational dataset with ground-truth tables");
  gen_opts(gen, "--seeds");
  gen->add_option("--seed", s.seed, "Master seed");
  gen->add_option("--out", s.out, "Dataset path (JSON lines)")->required();
  gen->add_flag("--no-ground-truth", s.no_ground_truth, "Strip the counterfactual tables");
  jobs_opt(gen);

  auto* train = cli.add_subcommand("train", "Fit one estimator on the factual training split");
  train->add_option("dataset", s.dataset, "Dataset path")->required();
  train->add_option("--model", s.model_name, "sccfr | sctarnet | cfr | tarnet | mlp | ridge");
  train->add_option("--outcome", s.outcome, "max | mean | std");
  train->add_option("--lambda", s.lambda, "IPM weight (default: pick from 0.1, 1, 10 on validation)");
  train->add_option("--seed", s.seed, "Training seed");
  train->add_option("--split-seed", s.split_seed, "Train/test split seed (default: --seed)");
  train->add_option("--epochs", s.epochs, "Training epochs");
  train->add_option("--config", s.config, "Flat key = value config file");
  train->add_option("--out", s.out, "Checkpoint path")->required();

  auto* evaluate = cli.add_subcommand("evaluate", "Score checkpoints against the ground-truth tables");
  evaluate->add_option("dataset", s.dataset, "Dataset path")->required();
  evaluate->add_option("checkpoints", s.checkpoints, "Checkpoint files");
  evaluate->add_flag("--oracle", s.oracle, "Add a simulator-backed row (debug)");
  evaluate->add_option("--outcome", s.outcome, "Outcome for the oracle row");
  evaluate->add_option("--split-seed", s.split_seed, "Split seed for the oracle row");
  evaluate->add_option("--config", s.config, "Flat key = value config file");
  evaluate->add_option("--report", s.report, "Write the table here and the JSON lines next to it");

  auto* bench = cli.add_subcommand("bench", "Generate, train every method over n seeds, evaluate, check verdicts");
  gen_opts(bench, "--scenario-seeds");
  bench->add_option("--seeds", s.bench_seeds, "Number of training seeds")->check(CLI::PositiveNumber);
  bench->add_option("--master-seed", s.master_seed, "Dataset seed");
  bench->add_option("--epochs", s.epochs, "Training epochs");
  bench->add_option("--outcomes", s.outcomes, "Outcome components")->delimiter(',');
  bench->add_option("--methods", s.methods, "Subset of methods")->delimiter(',');
  bench->add_option("--out", s.out, "Output directory");
  jobs_opt(bench);

  auto* serve = cli.add_subcommand("serve", "HTTP what-if service");
  serve->add_option("--host", s.host, "Bind address");
  serve->add_option("--port", s.port, "Port");
  serve->add_option("--checkpoints", s.checkpoints, "Three checkpoints: max, mean, std")->expected(3);
  serve->add_flag("--oracle", s.oracle, "Predict with the simulator (debug)");
  serve->add_option("--cors-origin", s.cors_origin, "Access-Control-Allow-Origin value");
  serve->add_option("--budget-ms", s.budget_ms, "Per-request simulation budget");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen) return cmd_generate(s);
    if (*train) return cmd_train(s);
    if (*evaluate) return cmd_evaluate(s);
    if (*bench) return cmd_bench(s);
    if (*serve) return cmd_serve(s);
  } catch (const app::UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsageError;
  } catch (const model::TrainingDiverged& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kRuntimeFailure;
  } catch (const scenario::GenerationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kRuntimeFailure;
  }
  return kUsageError;
}

#include "crowdcate/app/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>

#include <fmt/format.h>

#include "crowdcate/common/digest.hpp"
#include "crowdcate/common/parallel.hpp"

namespace crowdcate::app {

using nlohmann::json;
using scenario::Dataset;
using scenario::Outcome;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void say(const Progress& progress, const std::string& msg) {
  if (progress) progress(msg);
}

json config_snapshot(const ExperimentConfig& c) {
  return {{"gen_config", scenario::to_json(c.gen)},
          {"sim_config", scenario::to_json(c.sim)},
          {"train_config", c.train.to_json()},
          {"train_fraction", c.train_fraction}};
}

// The estimator manifest already records seeds and input hashes, so it is the whole hashed
// part of the train run manifest.
RunManifest train_manifest(const json& meta) {
  RunManifest rm;
  rm.command = "train";
  rm.config = meta;
  rm.config.erase("run_id");
  return rm;
}

void stamp_run_id(model::Estimator& estimator) {
  estimator.meta()["run_id"] = train_manifest(estimator.meta()).run_id();
}

}  // namespace

std::string RunManifest::run_id() const {
  return sha256_hex(json{{"command", command}, {"config", config}, {"seeds", seeds}, {"inputs", inputs}}.dump());
}

json RunManifest::to_json() const {
  return {{"command", command},
          {"config", config},
          {"seeds", seeds},
          {"inputs", inputs},
          {"outputs", outputs},
          {"notes", notes},
          {"wall_clock_seconds", wall_clock_seconds},
          {"run_id", run_id()}};
}

void write_run_manifest(const std::filesystem::path& artifact, const RunManifest& manifest) {
  write_file(artifact.string() + ".run.json", manifest.to_json().dump(2) + "\n");
}

const sim::TheaterLayout& default_layout() {
  static const sim::TheaterLayout layout = sim::build_default_layout();
  return layout;
}

void check_layout(const Dataset& dataset) {
  if (dataset.manifest.layout_hash != default_layout().hash()) {
    throw UsageError(fmt::format("dataset layout hash {} does not match the built-in layout {}",
                                 dataset.manifest.layout_hash, default_layout().hash()));
  }
}

model::TrainingSet factual_training_set(const Dataset& dataset, const std::vector<std::size_t>& rows, Outcome outcome) {
  model::TrainingSet t;
  for (std::size_t r : rows) {
    const auto& rec = dataset.records.at(r);
    t.x.push_back(rec.occupancy);
    t.z.push_back(rec.factual_treatment);
    t.y.push_back(rec.factual_outcome.get(outcome));
  }
  return t;
}

// ---- generate

GenerateOutcome run_generate(const GenerateOptions& o) {
  const auto start = Clock::now();
  o.config.gen.validate();
  o.config.sim.validate();
  const sim::Simulator simulator(default_layout(), o.config.sim);
  scenario::GenerationResult gen = scenario::generate_dataset(simulator, o.config.gen, o.seed, o.jobs);

  RunManifest rm;
  rm.command = "generate";
  rm.config = {{"gen_config", scenario::to_json(o.config.gen)},
               {"sim_config", scenario::to_json(o.config.sim)},
               {"ground_truth", o.ground_truth}};
  rm.seeds = {{"master_seed", o.seed}};
  rm.inputs = {{"layout", default_layout().hash()}};

  GenerateOutcome out;
  out.run_id = rm.run_id();
  auto& m = out.dataset.manifest;
  m.gen = o.config.gen;
  m.sim = o.config.sim;
  m.master_seed = o.seed;
  m.layout_hash = default_layout().hash();
  m.seat_count = default_layout().seat_count();
  m.scenarios = gen.records.size();
  m.dropped = gen.dropped;
  m.ground_truth = o.ground_truth;
  m.run_id = out.run_id;
  out.dataset.records = std::move(gen.records);
  m.records_sha256 = sha256_hex(scenario::dataset_text(out.dataset, o.ground_truth));

  if (!o.out.empty()) {
    scenario::write_dataset(o.out, out.dataset, o.ground_truth);
    rm.outputs = {{"dataset", sha256_file(o.out)}, {"manifest", sha256_file(scenario::manifest_path(o.out))}};
    rm.wall_clock_seconds = seconds_since(start);
    write_run_manifest(o.out, rm);
  }
  return out;
}

// ---- train

model::FitResult train_on_split(const Dataset& dataset, const scenario::EvaluationSplit& split, model::ModelKind kind,
                                Outcome outcome, std::optional<double> lambda, const ExperimentConfig& config,
                                std::uint64_t seed) {
  model::TrainConfig tc = config.train;
  tc.seed = seed;
  const json context{{"outcome", scenario::to_string(outcome)},
                     {"dataset_sha256", dataset.manifest.records_sha256},
                     {"gen_config_hash", scenario::gen_config_hash(dataset.manifest.gen)},
                     {"split_seed", split.split_seed},
                     {"train_fraction", config.train_fraction},
                     {"train_scenarios", split.train.size()}};
  model::FitResult fit = model::fit_estimator(kind, lambda, default_layout(),
                                              factual_training_set(dataset, split.train, outcome), tc, context);
  stamp_run_id(fit.estimator);
  return fit;
}

TrainOutcome run_train(const TrainOptions& o) {
  const auto start = Clock::now();
  if (o.lambda && !(*o.lambda >= 0.0)) throw UsageError("--lambda must be >= 0");
  if (o.out.empty()) throw UsageError("--out is required");
  const Dataset dataset = scenario::read_dataset(o.dataset);
  check_layout(dataset);
  if (dataset.records.size() < 2) throw UsageError("dataset needs at least two scenarios");
  const std::uint64_t split_seed = o.split_seed.value_or(o.seed);
  const auto split = scenario::split_scenarios(dataset.records.size(), split_seed, o.config.train_fraction);

  TrainOutcome out;
  out.fit = train_on_split(dataset, split, o.kind, o.outcome, o.lambda, o.config, o.seed);
  out.run_id = out.fit.estimator.meta()["run_id"].get<std::string>();
  out.fit.estimator.save(o.out);

  std::string log;
  for (const auto& t : out.fit.lambda_trials) {
    log += json{{"lambda_trial", t.lambda}, {"validation_mse", t.validation_mse}}.dump() + "\n";
  }
  for (const auto& e : out.fit.log.epochs) {
    log += json{{"epoch", e.epoch},
                {"train_loss", e.train_loss},
                {"validation_mse", e.validation_mse},
                {"mean_batch_ipm", e.mean_batch_ipm}}
               .dump() +
           "\n";
  }
  write_file(o.out.string() + ".log.jsonl", log);

  RunManifest rm = train_manifest(out.fit.estimator.meta());
  rm.notes = {{"model", model::to_string(o.kind)}, {"seed", o.seed}, {"split_seed", split_seed}};
  rm.outputs = {{"checkpoint", sha256_file(o.out)}};
  rm.wall_clock_seconds = seconds_since(start);
  write_run_manifest(o.out, rm);
  return out;
}

// ---- evaluate

eval::MetricsReport evaluate_estimator(const model::Estimator& estimator, const Dataset& dataset,
                                       const scenario::EvaluationSplit& split) {
  const Outcome outcome = scenario::parse_outcome(estimator.meta().value("outcome", std::string("max")));
  const eval::Predictor predictor = [&](const std::vector<sim::Occupancy>& xs) {
    const auto rows = estimator.predict_tables(default_layout(), xs);
    eval::Table t;
    for (const auto& r : rows) t.emplace_back(r.begin(), r.end());
    return t;
  };
  return eval::evaluate(predictor, estimator.method_label(), estimator.meta().value("layout_hash", std::string()),
                        dataset, split, outcome);
}

EvaluateOutcome run_evaluate(const EvaluateOptions& o) {
  if (o.checkpoints.empty() && !o.oracle) throw UsageError("nothing to evaluate: give checkpoints or --oracle");
  const Dataset dataset = scenario::read_dataset(o.dataset);
  check_layout(dataset);
  EvaluateOutcome out;
  std::vector<Outcome> outcomes;
  for (const auto& path : o.checkpoints) {
    const model::Estimator est = model::Estimator::load(path);
    const json& meta = est.meta();
    const std::string layout_hash = meta.value("layout_hash", std::string());
    if (layout_hash != dataset.manifest.layout_hash) {
      throw UsageError(fmt::format("{}: layout hash {} does not match the dataset's {}", path.string(), layout_hash,
                                   dataset.manifest.layout_hash));
    }
    if (meta.value("dataset_sha256", std::string()) != dataset.manifest.records_sha256) {
      throw UsageError(fmt::format("{} was trained on a different dataset", path.string()));
    }
    const auto split = scenario::split_scenarios(dataset.records.size(), meta.at("split_seed").get<std::uint64_t>(),
                                                 meta.at("train_fraction").get<double>());
    eval::ReportEntry entry;
    entry.seed = meta.at("train_config").at("seed").get<std::uint64_t>();
    entry.report = evaluate_estimator(est, dataset, split);
    outcomes.push_back(entry.report.outcome);
    out.entries.push_back(std::move(entry));
  }
  if (o.oracle) {
    const sim::Simulator simulator(default_layout(), dataset.manifest.sim);
    const model::OracleModel oracle(simulator, o.oracle_outcome);
    const auto split = scenario::split_scenarios(dataset.records.size(), o.oracle_split_seed, o.train_fraction);
    const eval::Predictor predictor = [&](const std::vector<sim::Occupancy>& xs) {
      eval::Table t;
      for (const auto& r : oracle.predict_tables(xs)) t.emplace_back(r.begin(), r.end());
      return t;
    };
    eval::ReportEntry entry;
    entry.seed = o.oracle_split_seed;
    entry.report = eval::evaluate(predictor, "Oracle", default_layout().hash(), dataset, split, o.oracle_outcome);
    outcomes.push_back(o.oracle_outcome);
    out.entries.push_back(std::move(entry));
  }
  for (Outcome oc : {Outcome::max_time, Outcome::mean_time, Outcome::std_time}) {
    if (std::find(outcomes.begin(), outcomes.end(), oc) == outcomes.end()) continue;
    if (!out.table.empty()) out.table += "\n";
    out.table += eval::render_table(out.entries, oc);
  }
  if (o.report) {
    write_file(*o.report, out.table);
    write_file(o.report->string() + ".jsonl", eval::to_jsonl(out.entries));
  }
  return out;
}

// ---- bench

std::string Verdict::line() const {
  return fmt::format("{}: {}{}", name, pass ? "PASS" : "FAIL", detail.empty() ? "" : " (" + detail + ")");
}

bool BenchOutcome::all_pass() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

namespace {

double mean_of(const std::vector<std::pair<std::uint64_t, double>>& xs) {
  double s = 0.0;
  for (const auto& [seed, v] : xs) s += v;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

std::vector<std::pair<std::uint64_t, double>> first_n(std::vector<std::pair<std::uint64_t, double>> xs, std::size_t n) {
  if (xs.size() > n) xs.resize(n);
  return xs;
}

Verdict reduction_verdict(const std::vector<eval::ReportEntry>& entries, const std::string& baseline) {
  const auto ours = first_n(eval::out_of_sample_mpehe(entries, "SC-CFR", Outcome::max_time), 5);
  const auto theirs = first_n(eval::out_of_sample_mpehe(entries, baseline, Outcome::max_time), 5);
  Verdict v;
  v.name = fmt::format("SC-CFR vs {} mPEHE reduction ≥ 20%", baseline);
  if (ours.empty() || theirs.empty() || ours.size() != theirs.size()) {
    v.detail = "missing results";
    return v;
  }
  const double a = mean_of(ours), b = mean_of(theirs);
  const double reduction = b > 0.0 ? 1.0 - a / b : 0.0;
  v.pass = reduction >= 0.20;
  v.detail = fmt::format("{:.3f} vs {:.3f}, reduction {:.1f}% over {} seeds", a, b, 100.0 * reduction, ours.size());
  return v;
}

Verdict wins_verdict(const std::vector<eval::ReportEntry>& entries, const std::string& spatial,
                     const std::string& dense) {
  const auto a = eval::out_of_sample_mpehe(entries, spatial, Outcome::max_time);
  const auto b = eval::out_of_sample_mpehe(entries, dense, Outcome::max_time);
  Verdict v;
  v.name = fmt::format("{} beats {} in ≥ 80% of seeds", spatial, dense);
  if (a.empty() || a.size() != b.size()) {
    v.detail = "missing results";
    return v;
  }
  std::size_t wins = 0;
  for (std::size_t i = 0; i < a.size(); ++i) wins += a[i].second < b[i].second ? 1 : 0;
  v.pass = 10 * wins >= 8 * a.size();
  v.detail = fmt::format("{}/{} seeds", wins, a.size());
  return v;
}

}  // namespace

std::vector<Verdict> bench_verdicts(const std::vector<eval::ReportEntry>& entries, std::size_t scenarios) {
  std::vector<Verdict> out;
  {
    Verdict v;
    v.name = "dataset has ≥ 300 scenarios";
    v.pass = scenarios >= 300;
    v.detail = fmt::format("{} scenarios", scenarios);
    out.push_back(v);
  }
  out.push_back(reduction_verdict(entries, "Ridge"));
  out.push_back(reduction_verdict(entries, "MLP"));
  {
    const auto a = eval::out_of_sample_mpehe(entries, "SC-CFR", Outcome::max_time);
    const auto b = eval::out_of_sample_mpehe(entries, "SC-TARNET", Outcome::max_time);
    Verdict v;
    v.name = "SC-CFR not worse than SC-TARNET by more than 2%";
    if (!a.empty() && a.size() == b.size()) {
      const double ma = mean_of(a), mb = mean_of(b);
      v.pass = ma <= 1.02 * mb;
      v.detail = fmt::format("{:.3f} vs {:.3f}, ratio {:.4f} over {} seeds", ma, mb, mb > 0 ? ma / mb : 0.0, a.size());
    } else {
      v.detail = "missing results";
    }
    out.push_back(v);
  }
  out.push_back(wins_verdict(entries, "SC-CFR", "CFR"));
  out.push_back(wins_verdict(entries, "SC-TARNET", "TARNET"));
  return out;
}

BenchOutcome run_bench(const BenchOptions& o) {
  if (o.seeds == 0) throw UsageError("--seeds must be at least 1");
  if (o.methods.empty() || o.outcomes.empty()) throw UsageError("bench needs at least one method and one outcome");
  const auto start = Clock::now();

  say(o.progress, "generating dataset");
  GenerateOptions g;
  g.config = o.config;
  g.seed = o.master_seed;
  g.jobs = o.jobs;
  if (o.out_dir) {
    std::filesystem::create_directories(*o.out_dir);
    g.out = *o.out_dir / "dataset.jsonl";
  }
  const Dataset dataset = run_generate(g).dataset;
  const std::size_t n = dataset.records.size();
  say(o.progress, fmt::format("{} scenarios ({} dropped)", n, dataset.manifest.dropped));
  if (n < 2) throw std::runtime_error("bench dataset has fewer than two scenarios");

  struct Job {
    Outcome outcome;
    model::ModelKind kind;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Outcome oc : o.outcomes) {
    for (model::ModelKind k : o.methods) {
      for (std::uint64_t s = 0; s < o.seeds; ++s) jobs.push_back({oc, k, s});
    }
  }
  struct JobResult {
    eval::ReportEntry entry;
    std::vector<model::LambdaTrial> trials;
    double lambda = 0.0;
  };
  std::vector<JobResult> results(jobs.size());
  std::vector<std::size_t> order(jobs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // Longest jobs first so a pool does not end on a lambda sweep.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto cost = [](model::ModelKind k) { return k == model::ModelKind::sccfr ? 0 : k == model::ModelKind::sctarnet ? 1 : 2; };
    return cost(jobs[a].kind) < cost(jobs[b].kind);
  });
  if (o.out_dir) std::filesystem::create_directories(*o.out_dir / "models");
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  parallel_for(jobs.size(), o.jobs, [&](std::size_t k) {
    const Job& job = jobs[order[k]];
    const auto split = scenario::split_scenarios(n, job.seed, o.config.train_fraction);
    model::FitResult fit = train_on_split(dataset, split, job.kind, job.outcome, std::nullopt, o.config, job.seed);
    JobResult& r = results[order[k]];
    r.entry.seed = job.seed;
    r.entry.report = evaluate_estimator(fit.estimator, dataset, split);
    r.trials = fit.lambda_trials;
    r.lambda = fit.estimator.meta().value("ipm_weight", 0.0);
    if (o.out_dir) {
      fit.estimator.save(*o.out_dir / "models" /
                         fmt::format("{}-{}-s{}.ckpt", model::to_string(job.kind), scenario::to_string(job.outcome), job.seed));
    }
    const std::size_t finished = ++done;
    std::lock_guard lock(progress_mutex);
    say(o.progress, fmt::format("[{}/{}] {} {} seed {}: out-of-sample mPEHE {:.3f}", finished, jobs.size(),
                                r.entry.report.method, scenario::to_string(job.outcome), job.seed,
                                r.entry.report.out_of_sample.mpehe));
  });

  BenchOutcome out;
  out.scenarios = n;
  out.dropped = dataset.manifest.dropped;
  for (const auto& r : results) out.entries.push_back(r.entry);
  out.verdicts = bench_verdicts(out.entries, n);

  RunManifest rm;
  rm.command = "bench";
  rm.config = config_snapshot(o.config);
  json methods = json::array(), outcomes = json::array();
  for (auto k : o.methods) methods.push_back(model::to_string(k));
  for (auto oc : o.outcomes) outcomes.push_back(scenario::to_string(oc));
  rm.config["methods"] = methods;
  rm.config["outcomes"] = outcomes;
  rm.seeds = {{"master_seed", o.master_seed}, {"seeds", o.seeds}};
  rm.inputs = {{"layout", default_layout().hash()}};
  std::string& rep = out.report;
  rep += fmt::format("run id: {}\n", rm.run_id());
  rep += fmt::format("master seed: {}\nscenarios: {} (dropped {})\ndataset sha256: {}\nseeds: {}\n\n", o.master_seed, n,
                     dataset.manifest.dropped, dataset.manifest.records_sha256, o.seeds);
  for (Outcome oc : o.outcomes) rep += eval::render_table(out.entries, oc) + "\n";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (results[i].trials.size() < 2) continue;
    rep += fmt::format("lambda {} {} seed {}:", results[i].entry.report.method, scenario::to_string(jobs[i].outcome),
                       jobs[i].seed);
    for (const auto& t : results[i].trials) rep += fmt::format(" {}→{:.4f}", t.lambda, t.validation_mse);
    rep += fmt::format(" (chose {})\n", results[i].lambda);
  }
  rep += "\n";
  const bool has_max = std::find(o.outcomes.begin(), o.outcomes.end(), Outcome::max_time) != o.outcomes.end();
  if (has_max) {
    for (const auto& v : out.verdicts) rep += v.line() + "\n";
  } else {
    rep += "verdicts need the max outcome\n";
    out.verdicts.clear();
  }

  if (o.out_dir) {
    const auto report_path = *o.out_dir / "report.txt";
    write_file(report_path, rep);
    write_file(o.out_dir->string() + "/report.jsonl", eval::to_jsonl(out.entries));
    rm.outputs = {{"report", sha256_file(report_path)}, {"dataset", dataset.manifest.records_sha256}};
    rm.wall_clock_seconds = seconds_since(start);
    write_run_manifest(report_path, rm);
  }
  return out;
}

}  // namespace crowdcate::app

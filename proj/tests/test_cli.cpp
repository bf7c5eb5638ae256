#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "crowdcate/app/commands.hpp"
#include "crowdcate/app/config.hpp"
#include "crowdcate/common/digest.hpp"

namespace fs = std::filesystem;
using namespace crowdcate;

namespace {

struct CmdResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "crowdcate_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CmdResult run(const std::string& args) {
  const fs::path log = work_dir() / "last.log";
  const std::string cmd = std::string("cd '") + work_dir().string() + "' && '" CROWDCATE_BIN "' " + args + " > '" +
                          log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(log)};
}

// Ten 0.9-rate scenarios, generated once for the whole suite.
const fs::path& small_dataset() {
  static const fs::path p = [] {
    const CmdResult r = run("generate --rates 0.9,0.9,0.9,0.9 --combos 1 --seeds 10 --seed 3 --out small.jsonl");
    EXPECT_EQ(r.code, 0) << r.output;
    return work_dir() / "small.jsonl";
  }();
  return p;
}

}  // namespace

TEST(Config, ParsesKeysAndComments) {
  const auto c = app::parse_config("# experiment\noccupancy_rates = 0.5, 0.9\nepochs=7  # short\nipm_weight = 1\n"
                                   "learning_rate = 0.01\nmmd_kernel = rbf\n");
  EXPECT_EQ(c.gen.occupancy_rates, (std::vector<double>{0.5, 0.9}));
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.train.ipm_weight, 1.0);
  EXPECT_EQ(c.train.adam.learning_rate, 0.01);
  EXPECT_EQ(c.train.mmd.kernel, model::MmdKernel::rbf);
  const auto again = app::parse_config(app::to_config_text(c));
  EXPECT_EQ(app::to_config_text(again), app::to_config_text(c));
}

TEST(Config, ErrorsNameLineAndField) {
  try {
    app::parse_config("epochs = 3\nbogus = 1\n", "exp.cfg");
    FAIL();
  } catch (const app::ConfigError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.field(), "bogus");
    EXPECT_NE(std::string(e.what()).find("exp.cfg:2"), std::string::npos);
  }
  EXPECT_THROW(app::parse_config("noise_std = abc\n"), app::ConfigError);
  EXPECT_THROW(app::parse_config("epochs\n"), app::ConfigError);
  EXPECT_THROW(app::parse_config("capacity_full = 1\ncapacity_half = 1\n"), app::ConfigError);
  EXPECT_THROW(app::parse_config("occupancy_rates = 0.5, 1.5\n"), app::ConfigError);
  EXPECT_THROW(app::parse_number_list("0.1,,0.2", "rates"), app::UsageError);
}

TEST(RunManifest, IdIgnoresOutputsAndClock) {
  app::RunManifest a;
  a.command = "train";
  a.config = {{"epochs", 3}};
  app::RunManifest b = a;
  b.outputs = {{"x", "abc"}};
  b.wall_clock_seconds = 99;
  b.notes = {{"model", "sccfr"}};
  EXPECT_EQ(a.run_id(), b.run_id());
  b.seeds = {{"seed", 1}};
  EXPECT_NE(a.run_id(), b.run_id());
}

TEST(Cli, GenerateReportsCountsAndIsByteIdentical) {
  const CmdResult first = run("generate --rates 0.9,0.9,0.9,0.9 --combos 1 --seeds 10 --seed 3 --out again.jsonl");
  ASSERT_EQ(first.code, 0) << first.output;
  EXPECT_NE(first.output.find("scenarios: 10"), std::string::npos) << first.output;
  EXPECT_NE(first.output.find("dropped: 0"), std::string::npos) << first.output;
  const fs::path& ref = small_dataset();
  EXPECT_EQ(read_file(work_dir() / "again.jsonl"), read_file(ref));
  EXPECT_EQ(read_file(work_dir() / "again.jsonl.manifest.json"), read_file(ref.string() + ".manifest.json"));
  const auto manifest = nlohmann::json::parse(read_file(ref.string() + ".manifest.json"));
  const auto runj = nlohmann::json::parse(read_file(ref.string() + ".run.json"));
  EXPECT_EQ(manifest["run_id"], runj["run_id"]);
}

TEST(Cli, ObservationalExport) {
  ASSERT_EQ(run("generate --rates 0.9 --combos 1 --seeds 3 --no-ground-truth --out obs.jsonl").code, 0);
  EXPECT_EQ(read_file(work_dir() / "obs.jsonl").find("\"table\""), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  write_file(work_dir() / "bad.cfg", "epochs = 3\nbogus = 1\n");
  CmdResult r = run("generate --config bad.cfg --out x.jsonl");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("bad.cfg:2"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("bogus"), std::string::npos);

  r = run("train " + small_dataset().string() + " --model xgboost --out m.ckpt");
  EXPECT_EQ(r.code, 2);
  for (const char* name : {"sccfr", "sctarnet", "cfr", "tarnet", "mlp", "ridge"}) {
    EXPECT_NE(r.output.find(name), std::string::npos) << r.output;
  }
  EXPECT_EQ(run("train " + small_dataset().string() + " --outcome median --out m.ckpt").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("generate").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, RuntimeFailuresExitOne) {
  // a missing input is a usage problem; a corrupt one is a runtime failure
  EXPECT_EQ(run("train does-not-exist.jsonl --model ridge --out m.ckpt").code, 2);
  write_file(work_dir() / "corrupt.ckpt", "garbage");
  EXPECT_EQ(run("evaluate " + small_dataset().string() + " corrupt.ckpt").code, 1);
}

TEST(Cli, DivergenceCitesEpoch) {
  write_file(work_dir() / "hot.cfg", "learning_rate = 1e300\nepochs = 3\n");
  const CmdResult r = run("train " + small_dataset().string() + " --model tarnet --config hot.cfg --out hot.ckpt");
  EXPECT_EQ(r.code, 1) << r.output;
  EXPECT_NE(r.output.find("epoch"), std::string::npos) << r.output;
}

TEST(Cli, ZeroLambdaScCfrMatchesScTarnetCheckpoint) {
  const std::string ds = small_dataset().string();
  ASSERT_EQ(run("train " + ds + " --model sccfr --lambda 0 --seed 4 --epochs 2 --out a.ckpt").code, 0);
  ASSERT_EQ(run("train " + ds + " --model sctarnet --seed 4 --epochs 2 --out b.ckpt").code, 0);
  EXPECT_EQ(read_file(work_dir() / "a.ckpt"), read_file(work_dir() / "b.ckpt"));
  const auto runj = nlohmann::json::parse(read_file(work_dir() / "a.ckpt.run.json"));
  EXPECT_EQ(runj["outputs"]["checkpoint"], sha256_file(work_dir() / "a.ckpt"));
  EXPECT_TRUE(fs::exists(work_dir() / "a.ckpt.log.jsonl"));
}

TEST(Cli, RidgeTrainsQuicklyOnFourHundredScenarios) {
  ASSERT_EQ(run("generate --rates 0.9 --combos 1 --seeds 400 --seed 5 --out big.jsonl").code, 0);
  const auto start = std::chrono::steady_clock::now();
  const CmdResult r = run("train big.jsonl --model ridge --out ridge.ckpt");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_LT(secs, 10.0);
}

TEST(Cli, EvaluateOracleRowIsZeroAndRowsMatchCheckpoints) {
  const std::string ds = small_dataset().string();
  ASSERT_EQ(run("train " + ds + " --model ridge --seed 1 --out r1.ckpt").code, 0);
  ASSERT_EQ(run("train " + ds + " --model mlp --seed 1 --epochs 1 --out m1.ckpt").code, 0);
  const CmdResult r = run("evaluate " + ds + " r1.ckpt m1.ckpt --oracle --split-seed 1 --report eval.txt");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto entries = eval::entries_from_jsonl(read_file(work_dir() / "eval.txt.jsonl"));
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[0].report.method, "Ridge");
  EXPECT_EQ(entries[1].report.method, "MLP");
  EXPECT_EQ(entries[2].report.method, "Oracle");
  for (double v : eval::metric_columns(entries[2].report)) EXPECT_EQ(v, 0.0);
  EXPECT_NE(r.output.find("Oracle"), std::string::npos);
}

TEST(Cli, EvaluateRefusesForeignDataset) {
  ASSERT_EQ(run("generate --rates 0.9 --combos 1 --seeds 4 --seed 77 --out other.jsonl").code, 0);
  ASSERT_EQ(run("train " + small_dataset().string() + " --model ridge --out own.ckpt").code, 0);
  const CmdResult r = run("evaluate other.jsonl own.ckpt");
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST(Cli, EvaluatePairedColumnWithTwoMethodsOverFiveSeeds) {
  const std::string ds = small_dataset().string();
  std::string ckpts;
  for (int s = 0; s < 5; ++s) {
    for (const char* m : {"ridge", "mlp"}) {
      const std::string out = std::string(m) + "-s" + std::to_string(s) + ".ckpt";
      ASSERT_EQ(run("train " + ds + " --model " + m + " --seed " + std::to_string(s) + " --epochs 1 --out " + out).code, 0);
      ckpts += " " + out;
    }
  }
  const CmdResult r = run("evaluate " + ds + ckpts);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("paired"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("±"), std::string::npos) << r.output;
}

TEST(Cli, BenchSmokeIsReproducible) {
  const std::string flags =
      "bench --rates 0.9 --combos 1 --scenario-seeds 12 --seeds 1 --epochs 1 --outcomes max "
      "--methods ridge mlp --jobs 1 --out ";
  const CmdResult a = run(flags + "bench_a");
  const CmdResult b = run(flags + "bench_b");
  // A one-seed, two-method smoke run cannot satisfy the verdicts; it only has to finish.
  EXPECT_EQ(a.code, 1) << a.output;
  EXPECT_NE(a.output.find("SC-CFR vs Ridge mPEHE reduction ≥ 20%: FAIL"), std::string::npos) << a.output;
  EXPECT_EQ(read_file(work_dir() / "bench_a" / "report.txt"), read_file(work_dir() / "bench_b" / "report.txt"));
  EXPECT_EQ(read_file(work_dir() / "bench_a" / "report.jsonl"), read_file(work_dir() / "bench_b" / "report.jsonl"));
}

#include "crowdcate/scenario/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "crowdcate/common/digest.hpp"

namespace crowdcate::scenario {

using nlohmann::json;

json to_json(const GenConfig& c) {
  return {{"occupancy_rates", c.occupancy_rates},   {"seeds_per_rate_combo", c.seeds_per_rate_combo},
          {"min_people", c.min_people},             {"noise_std", c.noise_std},
          {"door_radius_m", c.door_radius_m},       {"cell_pitch_m", c.cell_pitch_m},
          {"max_combos", c.max_combos}};
}

GenConfig gen_config_from_json(const json& j) {
  GenConfig c;
  c.occupancy_rates = j.at("occupancy_rates").get<std::vector<double>>();
  c.seeds_per_rate_combo = j.at("seeds_per_rate_combo").get<std::size_t>();
  c.min_people = j.at("min_people").get<std::size_t>();
  c.noise_std = j.at("noise_std").get<double>();
  c.door_radius_m = j.at("door_radius_m").get<double>();
  c.cell_pitch_m = j.at("cell_pitch_m").get<double>();
  c.max_combos = j.value("max_combos", std::size_t{0});
  return c;
}

json to_json(const sim::SimConfig& c) {
  return {{"capacity_full", c.capacity_full},
          {"capacity_half", c.capacity_half},
          {"tick_limit", c.tick_limit},
          {"agent_priority_rule", "nearest_first"}};
}

sim::SimConfig sim_config_from_json(const json& j) {
  sim::SimConfig c;
  c.capacity_full = j.at("capacity_full").get<std::size_t>();
  c.capacity_half = j.at("capacity_half").get<std::size_t>();
  c.tick_limit = j.at("tick_limit").get<std::size_t>();
  if (j.value("agent_priority_rule", std::string("nearest_first")) != "nearest_first") {
    throw DatasetError("unknown agent_priority_rule");
  }
  return c;
}

json to_json(const DatasetManifest& m) {
  return {{"gen_config", to_json(m.gen)},
          {"sim_config", to_json(m.sim)},
          {"master_seed", m.master_seed},
          {"layout_hash", m.layout_hash},
          {"seat_count", m.seat_count},
          {"gen_config_hash", gen_config_hash(m.gen)},
          {"scenarios", m.scenarios},
          {"dropped", m.dropped},
          {"ground_truth", m.ground_truth},
          {"records_sha256", m.records_sha256},
          {"run_id", m.run_id}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.gen = gen_config_from_json(j.at("gen_config"));
  m.sim = sim_config_from_json(j.at("sim_config"));
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.layout_hash = j.at("layout_hash").get<std::string>();
  m.seat_count = j.at("seat_count").get<std::size_t>();
  m.scenarios = j.at("scenarios").get<std::size_t>();
  m.dropped = j.at("dropped").get<std::size_t>();
  m.ground_truth = j.at("ground_truth").get<bool>();
  m.records_sha256 = j.value("records_sha256", std::string());
  m.run_id = j.value("run_id", std::string());
  return m;
}

std::string gen_config_hash(const GenConfig& config) { return sha256_hex(to_json(config).dump()); }

json record_to_json(const ScenarioRecord& r, bool with_table) {
  json j;
  j["scenario_id"] = r.scenario_id;
  const auto packed = r.occupancy.packed();
  j["occupancy"] = base64_encode(packed);
  j["z"] = r.factual_treatment.bits();
  j["y_f"] = r.factual_outcome.values();
  if (with_table && r.has_table()) {
    json table = json::array();
    for (const auto& t : r.table) table.push_back(t.values());
    j["table"] = std::move(table);
  }
  j["seed"] = r.seed;
  return j;
}

namespace {

OutcomeTriple triple_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != kOutcomeCount) throw DatasetError(fmt::format("outcome triple has {} values", v.size()));
  for (double x : v) {
    if (!std::isfinite(x)) throw DatasetError("outcome value is not finite");
  }
  return {v[0], v[1], v[2]};
}

}  // namespace

ScenarioRecord record_from_json(const json& j, std::size_t seats) {
  ScenarioRecord r;
  try {
    r.scenario_id = j.at("scenario_id").get<std::uint64_t>();
    const auto bytes = base64_decode(j.at("occupancy").get<std::string>());
    r.occupancy = Occupancy::from_packed(bytes, seats);
    r.factual_treatment = Treatment::from_bits(j.at("z").get<std::array<int, sim::kTreatmentDims>>());
    r.factual_outcome = triple_from_json(j.at("y_f"));
    if (j.contains("table")) {
      const auto& t = j.at("table");
      if (!t.is_array() || t.size() != kTreatmentCount) {
        throw DatasetError(fmt::format("table must hold {} outcome triples", kTreatmentCount));
      }
      for (const auto& row : t) r.table.push_back(triple_from_json(row));
    }
    r.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw DatasetError(e.what());
  } catch (const std::invalid_argument& e) {
    throw DatasetError(e.what());
  }
  return r;
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  return std::filesystem::path(dataset_path.string() + ".manifest.json");
}

std::string dataset_text(const Dataset& dataset, bool with_ground_truth) {
  std::string out;
  for (const auto& r : dataset.records) {
    out += record_to_json(r, with_ground_truth).dump();
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset, bool with_ground_truth) {
  const std::string text = dataset_text(dataset, with_ground_truth);
  DatasetManifest m = dataset.manifest;
  m.ground_truth = with_ground_truth && m.ground_truth;
  m.scenarios = dataset.records.size();
  m.records_sha256 = sha256_hex(text);
  write_file(path, text);
  write_file(manifest_path(path), to_json(m).dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& path) {
  Dataset d;
  const auto mpath = manifest_path(path);
  if (!std::filesystem::exists(mpath)) throw DatasetError(fmt::format("missing dataset manifest {}", mpath.string()));
  try {
    d.manifest = manifest_from_json(json::parse(read_file(mpath)));
  } catch (const json::exception& e) {
    throw DatasetError(fmt::format("{}: {}", mpath.string(), e.what()));
  }
  const std::string text = read_file(path);
  if (!d.manifest.records_sha256.empty() && sha256_hex(text) != d.manifest.records_sha256) {
    throw DatasetError(fmt::format("{} does not match the hash recorded in its manifest", path.string()));
  }
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const std::size_t seats = d.manifest.seat_count;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      d.records.push_back(record_from_json(json::parse(line), seats));
    } catch (const json::exception& e) {
      throw DatasetError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    } catch (const DatasetError& e) {
      throw DatasetError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return d;
}

EvaluationSplit split_scenarios(std::size_t n, std::uint64_t split_seed, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train_fraction must be in (0, 1)");
  Rng rng(derive_seed(split_seed, {0x5b17}));
  auto order = permutation(rng, n);
  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(n)));
  EvaluationSplit split;
  split.split_seed = split_seed;
  split.train.assign(order.begin(), order.begin() + static_cast<long>(n_train));
  split.test.assign(order.begin() + static_cast<long>(n_train), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace crowdcate::scenario

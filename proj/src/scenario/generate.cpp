#include "crowdcate/scenario/generate.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <fmt/format.h>

#include "crowdcate/common/parallel.hpp"

namespace crowdcate::scenario {

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::max_time:
      return "max";
    case Outcome::mean_time:
      return "mean";
    case Outcome::std_time:
      return "std";
  }
  return "?";
}

Outcome parse_outcome(const std::string& name) {
  if (name == "max") return Outcome::max_time;
  if (name == "mean") return Outcome::mean_time;
  if (name == "std") return Outcome::std_time;
  throw std::invalid_argument(fmt::format("unknown outcome '{}' (valid: max, mean, std)", name));
}

double OutcomeTriple::get(Outcome o) const {
  switch (o) {
    case Outcome::max_time:
      return max_time;
    case Outcome::mean_time:
      return mean_time;
    case Outcome::std_time:
      return std_time;
  }
  return 0.0;
}

void GenConfig::validate() const {
  if (occupancy_rates.empty()) throw std::invalid_argument("occupancy_rates must not be empty");
  for (double r : occupancy_rates) {
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument(fmt::format("occupancy rate {} is outside (0, 1]", r));
  }
  if (seeds_per_rate_combo == 0) throw std::invalid_argument("seeds_per_rate_combo must be positive");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw std::invalid_argument("noise_std must be >= 0");
  if (!(door_radius_m > 0.0)) throw std::invalid_argument("door_radius_m must be positive");
  if (!(cell_pitch_m > 0.0)) throw std::invalid_argument("cell_pitch_m must be positive");
}

const std::vector<Treatment>& enumerate_treatments() {
  static const std::vector<Treatment> all = [] {
    std::vector<Treatment> out;
    out.reserve(kTreatmentCount);
    for (int guide = 0; guide < 2; ++guide) {
      for (std::size_t i = 0; i < sim::kExitCount; ++i) {
        for (std::size_t j = i + 1; j < sim::kExitCount; ++j) out.push_back(Treatment::with_doors(guide == 1, i, j));
      }
    }
    return out;
  }();
  return all;
}

std::size_t treatment_index(const Treatment& treatment) {
  if (!treatment.valid()) throw std::invalid_argument("invalid treatment " + treatment.to_string());
  const auto& all = enumerate_treatments();
  return static_cast<std::size_t>(std::find(all.begin(), all.end(), treatment) - all.begin());
}

Occupancy sample_occupancy(const TheaterLayout& layout, const std::array<double, sim::kBlockCount>& rates, Rng& rng) {
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument(fmt::format("occupancy rate {} is outside [0, 1]", r));
  }
  Occupancy occ(layout.seat_count());
  for (std::size_t s = 0; s < layout.seat_count(); ++s) occ.set(s, bernoulli(rng, rates[layout.block_of_seat(s)]));
  return occ;
}

Occupancy sample_occupancy(const TheaterLayout& layout, const std::array<double, sim::kBlockCount>& rates,
                           std::uint64_t seed) {
  Rng rng(seed);
  return sample_occupancy(layout, rates, rng);
}

double guide_propensity(const Occupancy& occupancy) {
  const double frac = static_cast<double>(occupancy.count()) / static_cast<double>(occupancy.size());
  return 1.0 / (1.0 + std::exp(-frac + 1.0));
}

DoorNeighborhoods door_neighborhoods(const TheaterLayout& layout, double radius_m, double cell_pitch_m) {
  DoorNeighborhoods hoods;
  for (std::size_t e = 0; e < sim::kExitCount; ++e) {
    const sim::CellPos door = layout.exits()[e].cell;
    for (std::size_t s = 0; s < layout.seat_count(); ++s) {
      const sim::CellPos p = layout.cell_pos(layout.seat_cell(s));
      const double dr = (static_cast<double>(p.row) - static_cast<double>(door.row)) * cell_pitch_m;
      const double dc = (static_cast<double>(p.col) - static_cast<double>(door.col)) * cell_pitch_m;
      if (std::hypot(dr, dc) <= radius_m) hoods.seats[e].push_back(s);
    }
  }
  return hoods;
}

std::array<double, sim::kExitCount> door_weights(const Occupancy& occupancy, const DoorNeighborhoods& hoods) {
  std::array<double, sim::kExitCount> w{};
  for (std::size_t e = 0; e < sim::kExitCount; ++e) {
    if (hoods.seats[e].empty()) continue;
    std::size_t occupied = 0;
    for (std::size_t s : hoods.seats[e]) occupied += occupancy[s] ? 1 : 0;
    w[e] = static_cast<double>(occupied) / static_cast<double>(hoods.seats[e].size());
  }
  return w;
}

std::pair<std::size_t, std::size_t> sample_doors(const std::array<double, sim::kExitCount>& weights, Rng& rng) {
  const std::size_t first = weighted_index(rng, weights);
  std::array<double, sim::kExitCount - 1> rest{};
  std::array<std::size_t, sim::kExitCount - 1> ids{};
  for (std::size_t e = 0, k = 0; e < sim::kExitCount; ++e) {
    if (e == first) continue;
    rest[k] = weights[e];
    ids[k++] = e;
  }
  return {first, ids[weighted_index(rng, rest)]};
}

namespace {

// Probability of each candidate under weighted_index's rule, including the uniform fallback.
std::vector<double> draw_probabilities(const std::vector<double>& w) {
  double total = 0.0;
  for (double x : w) total += x;
  std::vector<double> p(w.size(), 1.0 / static_cast<double>(w.size()));
  if (total > 0.0) {
    for (std::size_t i = 0; i < w.size(); ++i) p[i] = w[i] / total;
  }
  return p;
}

}  // namespace

std::array<double, 15> door_pair_distribution(const std::array<double, sim::kExitCount>& weights) {
  std::array<double, sim::kExitCount * sim::kExitCount> ordered{};
  const auto p1 = draw_probabilities({weights.begin(), weights.end()});
  for (std::size_t i = 0; i < sim::kExitCount; ++i) {
    std::vector<double> rest;
    std::vector<std::size_t> ids;
    for (std::size_t e = 0; e < sim::kExitCount; ++e) {
      if (e == i) continue;
      rest.push_back(weights[e]);
      ids.push_back(e);
    }
    const auto p2 = draw_probabilities(rest);
    for (std::size_t k = 0; k < ids.size(); ++k) ordered[i * sim::kExitCount + ids[k]] = p1[i] * p2[k];
  }
  std::array<double, 15> pairs{};
  std::size_t idx = 0;
  for (std::size_t i = 0; i < sim::kExitCount; ++i) {
    for (std::size_t j = i + 1; j < sim::kExitCount; ++j) {
      pairs[idx++] = ordered[i * sim::kExitCount + j] + ordered[j * sim::kExitCount + i];
    }
  }
  return pairs;
}

std::array<double, kTreatmentCount> treatment_distribution(const Occupancy& occupancy, const DoorNeighborhoods& hoods) {
  const double g = guide_propensity(occupancy);
  const auto pairs = door_pair_distribution(door_weights(occupancy, hoods));
  std::array<double, kTreatmentCount> out{};
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out[k] = (1.0 - g) * pairs[k];
    out[pairs.size() + k] = g * pairs[k];
  }
  return out;
}

Treatment sample_treatment(const Occupancy& occupancy, const DoorNeighborhoods& hoods, Rng& rng) {
  const bool guide = bernoulli(rng, guide_propensity(occupancy));
  const auto [a, b] = sample_doors(door_weights(occupancy, hoods), rng);
  return Treatment::with_doors(guide, a, b);
}

nn::Tensor to_covariate_grid(const TheaterLayout& layout, const Occupancy& occupancy) {
  if (occupancy.size() != layout.seat_count()) {
    throw std::invalid_argument(
        fmt::format("occupancy covers {} seats, layout has {}", occupancy.size(), layout.seat_count()));
  }
  nn::Tensor grid({1, layout.rows(), layout.cols()});
  for (std::size_t s = 0; s < layout.seat_count(); ++s) {
    if (occupancy[s]) grid[layout.seat_cell(s)] = 1.0;
  }
  return grid;
}

std::vector<std::array<double, sim::kBlockCount>> rate_combinations(const GenConfig& config) {
  std::vector<double> levels;
  for (double r : config.occupancy_rates) {
    if (std::find(levels.begin(), levels.end(), r) == levels.end()) levels.push_back(r);
  }
  const std::size_t n = levels.size();
  std::size_t total = 1;
  for (std::size_t b = 0; b < sim::kBlockCount; ++b) total *= n;
  std::vector<std::array<double, sim::kBlockCount>> combos;
  combos.reserve(total);
  for (std::size_t code = 0; code < total; ++code) {
    std::array<double, sim::kBlockCount> rates{};
    std::size_t rem = code;
    for (std::size_t b = sim::kBlockCount; b-- > 0;) {
      rates[b] = levels[rem % n];
      rem /= n;
    }
    combos.push_back(rates);
  }
  if (config.max_combos > 0 && config.max_combos < combos.size()) combos.resize(config.max_combos);
  return combos;
}

GenerationError::GenerationError(std::uint64_t scenario_id, const std::string& what)
    : std::runtime_error(fmt::format("scenario {}: {}", scenario_id, what)), scenario_id_(scenario_id) {}

std::vector<OutcomeTriple> simulate_table(const sim::Simulator& simulator, const Occupancy& occupancy) {
  std::vector<OutcomeTriple> table;
  table.reserve(kTreatmentCount);
  for (const Treatment& t : enumerate_treatments()) table.push_back(OutcomeTriple::from(simulator.run(occupancy, t)));
  return table;
}

GenerationResult generate_dataset(const sim::Simulator& simulator, const GenConfig& config, std::uint64_t master_seed,
                                  std::size_t jobs) {
  config.validate();
  const TheaterLayout& layout = simulator.layout();
  const auto combos = rate_combinations(config);
  const auto hoods = door_neighborhoods(layout, config.door_radius_m, config.cell_pitch_m);
  const std::size_t reps = config.seeds_per_rate_combo;
  const std::size_t n = combos.size() * reps;

  std::vector<std::optional<ScenarioRecord>> slots(n);
  std::vector<std::string> errors(n);
  (void)simulator.guided_plan();  // build the shared cache before fanning out

  parallel_for(n, jobs, [&](std::size_t i) {
    const std::size_t c = i / reps, s = i % reps;
    const std::uint64_t seed = derive_seed(master_seed, {c, s});
    Rng rng(seed);
    Occupancy occ = sample_occupancy(layout, combos[c], rng);
    if (occ.count() == 0 || occ.count() < config.min_people) return;
    ScenarioRecord rec;
    rec.scenario_id = i;
    rec.seed = seed;
    rec.factual_treatment = sample_treatment(occ, hoods, rng);
    try {
      rec.table = simulate_table(simulator, occ);
    } catch (const sim::NonTerminationError& e) {
      errors[i] = e.what();
      return;
    }
    const OutcomeTriple& truth = rec.table[treatment_index(rec.factual_treatment)];
    std::array<double, kOutcomeCount> noise{};
    for (double& z : noise) z = config.noise_std * normal(rng, 0.0, 1.0);
    rec.factual_outcome = {truth.max_time + noise[0], truth.mean_time + noise[1], truth.std_time + noise[2]};
    rec.occupancy = std::move(occ);
    slots[i] = std::move(rec);
  });

  GenerationResult result;
  result.combos = combos.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw GenerationError(i, errors[i]);
  }
  for (auto& slot : slots) {
    if (slot) {
      result.records.push_back(std::move(*slot));
    } else {
      ++result.dropped;
    }
  }
  return result;
}

}  // namespace crowdcate::scenario

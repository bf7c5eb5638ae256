#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crowdcate/common/rng.hpp"
#include "crowdcate/nn/tensor.hpp"
#include "crowdcate/sim/layout.hpp"
#include "crowdcate/sim/simulate.hpp"
#include "crowdcate/sim/types.hpp"

namespace crowdcate::scenario {

using sim::Occupancy;
using sim::TheaterLayout;
using sim::Treatment;

inline constexpr std::size_t kTreatmentCount = 30;
inline constexpr std::size_t kOutcomeCount = 3;

enum class Outcome { max_time = 0, mean_time = 1, std_time = 2 };

std::string to_string(Outcome outcome);
/// Accepts "max", "mean", "std".
Outcome parse_outcome(const std::string& name);

struct OutcomeTriple {
  double max_time = 0.0;
  double mean_time = 0.0;
  double std_time = 0.0;

  double get(Outcome o) const;
  std::array<double, kOutcomeCount> values() const { return {max_time, mean_time, std_time}; }
  static OutcomeTriple from(const sim::SimResult& r) { return {r.max_time, r.mean_time, r.std_time}; }
  bool operator==(const OutcomeTriple&) const = default;
};

struct GenConfig {
  std::vector<double> occupancy_rates{0.1, 0.5, 0.9};
  std::size_t seeds_per_rate_combo = 10;
  std::size_t min_people = 400;
  double noise_std = 2.0;
  double door_radius_m = 8.0;
  double cell_pitch_m = 0.9;
  std::size_t max_combos = 0;  // 0 = every combination

  void validate() const;
};

struct ScenarioRecord {
  std::uint64_t scenario_id = 0;
  Occupancy occupancy;
  Treatment factual_treatment;
  OutcomeTriple factual_outcome;
  /// Noiseless outcomes in enumerate_treatments() order; empty in observational exports.
  std::vector<OutcomeTriple> table;
  std::uint64_t seed = 0;

  bool has_table() const { return table.size() == kTreatmentCount; }
};

/// (guide, door pair) in lexicographic order: index = guide * 15 + pair index.
const std::vector<Treatment>& enumerate_treatments();
std::size_t treatment_index(const Treatment& treatment);

Occupancy sample_occupancy(const TheaterLayout& layout, const std::array<double, sim::kBlockCount>& rates, Rng& rng);
Occupancy sample_occupancy(const TheaterLayout& layout, const std::array<double, sim::kBlockCount>& rates,
                           std::uint64_t seed);

/// 1 / (1 + exp(-sum(x) / d + 1)).
double guide_propensity(const Occupancy& occupancy);

/// D_j: seats whose centre lies within radius_m of exit j's centre (Euclidean, cell pitch in metres).
struct DoorNeighborhoods {
  std::array<std::vector<std::size_t>, sim::kExitCount> seats;
};
DoorNeighborhoods door_neighborhoods(const TheaterLayout& layout, double radius_m, double cell_pitch_m);

/// Occupied fraction of each D_j (0 for an empty neighbourhood).
std::array<double, sim::kExitCount> door_weights(const Occupancy& occupancy, const DoorNeighborhoods& hoods);

/// Two distinct 0-based doors: first drawn by weight, then the second by the remaining
/// weights. A draw whose candidate weights are all zero is uniform over the candidates.
std::pair<std::size_t, std::size_t> sample_doors(const std::array<double, sim::kExitCount>& weights, Rng& rng);

/// Probability of the unordered pair {i, j} under sample_doors, in pair order.
std::array<double, 15> door_pair_distribution(const std::array<double, sim::kExitCount>& weights);

/// Full assignment distribution over the 30 treatments.
std::array<double, kTreatmentCount> treatment_distribution(const Occupancy& occupancy, const DoorNeighborhoods& hoods);

Treatment sample_treatment(const Occupancy& occupancy, const DoorNeighborhoods& hoods, Rng& rng);

/// [1, rows, cols]: 1 on occupied seats, 0 elsewhere.
nn::Tensor to_covariate_grid(const TheaterLayout& layout, const Occupancy& occupancy);

/// Rate combinations for the four blocks, block A most significant, rates deduplicated in
/// first-seen order.
std::vector<std::array<double, sim::kBlockCount>> rate_combinations(const GenConfig& config);

class GenerationError : public std::runtime_error {
 public:
  GenerationError(std::uint64_t scenario_id, const std::string& what);
  std::uint64_t scenario_id() const { return scenario_id_; }

 private:
  std::uint64_t scenario_id_;
};

struct GenerationResult {
  std::vector<ScenarioRecord> records;
  std::size_t dropped = 0;
  std::size_t combos = 0;
};

/// Scenario (combo c, repetition s) has id c * seeds_per_rate_combo + s and draws everything
/// from derive_seed(master_seed, {c, s}): occupancy, then guide bit, then doors, then three
/// standard normals scaled by noise_std. Output order and content do not depend on `jobs`.
GenerationResult generate_dataset(const sim::Simulator& simulator, const GenConfig& config, std::uint64_t master_seed,
                                  std::size_t jobs = 1);

/// Noiseless 30-entry table for one occupancy.
std::vector<OutcomeTriple> simulate_table(const sim::Simulator& simulator, const Occupancy& occupancy);

}  // namespace crowdcate::scenario

#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "crowdcate/sim/layout.hpp"
#include "crowdcate/sim/routing.hpp"
#include "crowdcate/sim/types.hpp"

namespace crowdcate::sim {

/// Order in which agents of one exit stream claim cells and door slots.
/// nearest_first: smaller starting distance to the assigned exit first, then lower seat id.
enum class PriorityRule { nearest_first };

struct SimConfig {
  std::size_t capacity_full = 2;
  std::size_t capacity_half = 1;
  std::size_t tick_limit = 0;  // 0 = default_tick_limit()
  PriorityRule priority = PriorityRule::nearest_first;

  /// Throws std::invalid_argument on capacity_half >= capacity_full or a zero capacity.
  void validate() const;
  std::size_t resolved_tick_limit(const TheaterLayout& layout) const;
};

/// 10 * (rows + cols) * ceil(seats / (6 * capacity_half)).
std::size_t default_tick_limit(const TheaterLayout& layout, std::size_t capacity_half);

struct SimResult {
  std::vector<double> evac_time_per_agent;  // agents in ascending seat id
  double max_time = 0.0;
  double mean_time = 0.0;
  double std_time = 0.0;  // population std

  bool operator==(const SimResult&) const = default;
};

class NonTerminationError : public std::runtime_error {
 public:
  NonTerminationError(std::size_t stuck, std::size_t tick_limit);
  std::size_t stuck_agents() const { return stuck_; }

 private:
  std::size_t stuck_;
};

using DoorCapacities = std::array<std::size_t, kExitCount>;

/// Lattice evacuation model.
///
/// Each agent walks its exit's successor tree one cell per tick. Agents bound for the same
/// exit form a lane: a cell holds at most one of them, they pass every shared cell in
/// priority order, and the exit absorbs at most `capacity` of them per tick. Lanes toward
/// different exits do not block each other. The tick loop is evaluated in closed form per
/// agent (see run_with_plan), which the tests check against a literal tick-by-tick loop.
class Simulator {
 public:
  explicit Simulator(TheaterLayout layout, SimConfig config = {});
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  const TheaterLayout& layout() const { return layout_; }
  const SimConfig& config() const { return config_; }
  const DistanceFields& fields() const { return fields_; }
  const std::vector<long>& successors(std::size_t exit_index) const { return successors_[exit_index]; }
  std::size_t tick_limit() const { return tick_limit_; }

  DoorCapacities capacities(const Treatment& treatment) const;
  DoorCapacities all_full() const;

  /// Full-house load-balanced plan; computed once and cached.
  const RoutePlan& guided_plan() const;
  RoutePlan plan_for(const Occupancy& occupancy, bool route_guide) const;

  SimResult run(const Occupancy& occupancy, const Treatment& treatment) const;
  SimResult run_with_plan(const RoutePlan& plan, const DoorCapacities& capacities) const;

  /// Per-agent priority key order for one exit: seats of `plan` bound for the exit, sorted.
  std::vector<std::size_t> lane_order(const RoutePlan& plan, std::size_t exit_index) const;

 private:
  TheaterLayout layout_;
  SimConfig config_;
  DistanceFields fields_;
  std::vector<std::vector<long>> successors_;
  std::size_t tick_limit_;

  mutable std::once_flag guided_once_;
  mutable RoutePlan guided_;
};

SimResult summarize(std::vector<double> times);

SimResult simulate(const Simulator& simulator, const Occupancy& occupancy, const Treatment& treatment);
RoutePlan guided_plan(const Simulator& simulator);

}  // namespace crowdcate::sim

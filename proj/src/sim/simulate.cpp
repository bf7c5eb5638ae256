#include "crowdcate/sim/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <fmt/format.h>

namespace crowdcate::sim {

void SimConfig::validate() const {
  if (capacity_half == 0 || capacity_full == 0) throw std::invalid_argument("door capacities must be at least 1");
  if (capacity_half >= capacity_full) {
    throw std::invalid_argument(
        fmt::format("capacity_half ({}) must be below capacity_full ({})", capacity_half, capacity_full));
  }
}

std::size_t default_tick_limit(const TheaterLayout& layout, std::size_t capacity_half) {
  const std::size_t per_tick = kExitCount * capacity_half;
  return 10 * (layout.rows() + layout.cols()) * ((layout.seat_count() + per_tick - 1) / per_tick);
}

std::size_t SimConfig::resolved_tick_limit(const TheaterLayout& layout) const {
  return tick_limit == 0 ? default_tick_limit(layout, capacity_half) : tick_limit;
}

NonTerminationError::NonTerminationError(std::size_t stuck, std::size_t tick_limit)
    : std::runtime_error(fmt::format("{} agents still inside after the tick limit of {}", stuck, tick_limit)),
      stuck_(stuck) {}

Simulator::Simulator(TheaterLayout layout, SimConfig config)
    : layout_(std::move(layout)), config_(config), fields_(distance_fields(layout_)) {
  config_.validate();
  tick_limit_ = config_.resolved_tick_limit(layout_);
  successors_.reserve(kExitCount);
  for (std::size_t e = 0; e < kExitCount; ++e) successors_.push_back(successor_map(layout_, fields_, e));
}

DoorCapacities Simulator::capacities(const Treatment& treatment) const {
  if (!treatment.valid()) throw std::invalid_argument("invalid treatment " + treatment.to_string());
  DoorCapacities caps{};
  for (std::size_t e = 0; e < kExitCount; ++e) caps[e] = treatment.doors[e] ? config_.capacity_full : config_.capacity_half;
  return caps;
}

DoorCapacities Simulator::all_full() const {
  DoorCapacities caps{};
  caps.fill(config_.capacity_full);
  return caps;
}

std::vector<std::size_t> Simulator::lane_order(const RoutePlan& plan, std::size_t exit_index) const {
  std::vector<std::size_t> seats;
  for (std::size_t s = 0; s < plan.exit_of_seat.size(); ++s) {
    if (plan.exit_of_seat[s] == static_cast<int>(exit_index)) seats.push_back(s);
  }
  const auto& dist = fields_.per_exit[exit_index];
  std::stable_sort(seats.begin(), seats.end(), [&](std::size_t a, std::size_t b) {
    return dist[layout_.seat_cell(a)] < dist[layout_.seat_cell(b)];
  });
  return seats;
}

// Closed form of the lane tick loop. Agents are visited in priority order; `left[c]` is the
// tick at which the previous agent of the lane vacated cell c. An agent enters the next cell
// one tick after entering its current one, or as soon as that cell is vacated, whichever is
// later. At the exit it also waits for the agent ahead (FIFO) and for a free door slot: the
// agent `capacity` places ahead must have been absorbed in an earlier tick.
//
// An earlier agent never walks over a later agent's seat (every cell on its path is strictly
// closer to the exit than its own seat), so vacancy times only ever come from earlier agents.
SimResult Simulator::run_with_plan(const RoutePlan& plan, const DoorCapacities& capacities) const {
  if (plan.exit_of_seat.size() != layout_.seat_count()) {
    throw std::invalid_argument(
        fmt::format("route plan covers {} seats, layout has {}", plan.exit_of_seat.size(), layout_.seat_count()));
  }
  for (std::size_t e = 0; e < kExitCount; ++e) {
    if (capacities[e] == 0) throw std::invalid_argument(fmt::format("exit {} has zero capacity", e + 1));
  }
  std::vector<double> time_of_seat(layout_.seat_count(), -1.0);
  std::vector<long> left(layout_.cell_count(), 0);
  std::vector<long> absorbed;
  std::size_t agents = 0;
  std::size_t stuck = 0;

  for (std::size_t e = 0; e < kExitCount; ++e) {
    const auto order = lane_order(plan, e);
    if (order.empty()) continue;
    const auto& next_of = successors_[e];
    const std::size_t exit_cell = layout_.exit_cell(e);
    std::fill(left.begin(), left.end(), 0);
    absorbed.clear();
    absorbed.reserve(order.size());
    for (std::size_t seat : order) {
      long t = 0;
      std::size_t cur = layout_.seat_cell(seat);
      for (;;) {
        const long nxt = next_of[cur];
        if (nxt < 0) throw std::logic_error("route leads into a dead end");
        if (static_cast<std::size_t>(nxt) == exit_cell) {
          long T = t + 1;
          if (!absorbed.empty()) T = std::max(T, absorbed.back());
          const std::size_t k = absorbed.size();
          if (k >= capacities[e]) T = std::max(T, absorbed[k - capacities[e]] + 1);
          left[cur] = T;
          absorbed.push_back(T);
          break;
        }
        const long enter = std::max(t + 1, left[static_cast<std::size_t>(nxt)]);
        left[cur] = enter;
        t = enter;
        cur = static_cast<std::size_t>(nxt);
      }
      time_of_seat[seat] = static_cast<double>(absorbed.back());
      if (static_cast<std::size_t>(absorbed.back()) > tick_limit_) ++stuck;
      ++agents;
    }
  }
  if (agents == 0) throw std::invalid_argument("simulation needs at least one agent");
  if (stuck > 0) throw NonTerminationError(stuck, tick_limit_);

  std::vector<double> times;
  times.reserve(agents);
  for (double t : time_of_seat) {
    if (t >= 0) times.push_back(t);
  }
  return summarize(std::move(times));
}

SimResult summarize(std::vector<double> times) {
  SimResult r;
  if (times.empty()) return r;
  double total = 0.0;
  for (double t : times) total += t;
  r.mean_time = total / static_cast<double>(times.size());
  double sq = 0.0;
  for (double t : times) sq += (t - r.mean_time) * (t - r.mean_time);
  r.std_time = std::sqrt(sq / static_cast<double>(times.size()));
  r.max_time = *std::max_element(times.begin(), times.end());
  r.evac_time_per_agent = std::move(times);
  return r;
}

const RoutePlan& Simulator::guided_plan() const {
  std::call_once(guided_once_, [this] {
    const std::size_t n = layout_.seat_count();
    const Occupancy full(n, true);
    const DoorCapacities caps = all_full();

    auto min_dist = [&](std::size_t s) {
      int best = std::numeric_limits<int>::max();
      for (std::size_t e = 0; e < kExitCount; ++e) best = std::min(best, fields_.distance(e, layout_.seat_cell(s)));
      return best;
    };
    std::vector<std::size_t> row_major(n);
    std::iota(row_major.begin(), row_major.end(), std::size_t{0});
    std::vector<std::vector<std::size_t>> orders;
    orders.push_back(row_major);
    orders.emplace_back(row_major.rbegin(), row_major.rend());
    auto by_col = row_major;
    std::stable_sort(by_col.begin(), by_col.end(), [&](std::size_t a, std::size_t b) {
      return layout_.cell_pos(layout_.seat_cell(a)).col < layout_.cell_pos(layout_.seat_cell(b)).col;
    });
    orders.push_back(by_col);
    orders.emplace_back(by_col.rbegin(), by_col.rend());
    auto near_first = row_major;
    std::stable_sort(near_first.begin(), near_first.end(),
                     [&](std::size_t a, std::size_t b) { return min_dist(a) < min_dist(b); });
    orders.push_back(near_first);
    orders.emplace_back(near_first.rbegin(), near_first.rend());

    const double cap = static_cast<double>(config_.capacity_full);
    RoutePlan best = nearest_exit_plan(layout_, fields_, full);
    double best_makespan = run_with_plan(best, caps).max_time;
    for (const auto& order : orders) {
      RoutePlan plan{std::vector<int>(n, -1)};
      std::array<double, kExitCount> load{};
      for (std::size_t s : order) {
        const std::size_t cell = layout_.seat_cell(s);
        std::size_t pick = 0;
        double pick_cost = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < kExitCount; ++e) {
          const double cost = load[e] / cap + fields_.distance(e, cell);
          if (cost < pick_cost) {
            pick_cost = cost;
            pick = e;
          }
        }
        plan.exit_of_seat[s] = static_cast<int>(pick);
        load[pick] += 1.0;
      }
      const double makespan = run_with_plan(plan, caps).max_time;
      if (makespan < best_makespan) {
        best_makespan = makespan;
        best = std::move(plan);
      }
    }
    guided_ = std::move(best);
  });
  return guided_;
}

RoutePlan Simulator::plan_for(const Occupancy& occupancy, bool route_guide) const {
  if (occupancy.size() != layout_.seat_count()) {
    throw std::invalid_argument(
        fmt::format("occupancy covers {} seats, layout has {}", occupancy.size(), layout_.seat_count()));
  }
  if (route_guide) return restrict_plan(guided_plan(), occupancy);
  return nearest_exit_plan(layout_, fields_, occupancy);
}

SimResult Simulator::run(const Occupancy& occupancy, const Treatment& treatment) const {
  const DoorCapacities caps = capacities(treatment);
  if (occupancy.size() == layout_.seat_count() && occupancy.count() == 0) {
    throw std::invalid_argument("simulation needs at least one occupied seat");
  }
  return run_with_plan(plan_for(occupancy, treatment.route_guide), caps);
}

SimResult simulate(const Simulator& simulator, const Occupancy& occupancy, const Treatment& treatment) {
  return simulator.run(occupancy, treatment);
}

RoutePlan guided_plan(const Simulator& simulator) { return simulator.guided_plan(); }

}  // namespace crowdcate::sim

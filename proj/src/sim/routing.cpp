#include "crowdcate/sim/routing.hpp"

#include <algorithm>
#include <deque>

#include <fmt/format.h>

namespace crowdcate::sim {

DistanceFields distance_fields(const TheaterLayout& layout) {
  DistanceFields fields;
  fields.per_exit.reserve(layout.exits().size());
  for (std::size_t e = 0; e < layout.exits().size(); ++e) {
    std::vector<int> dist(layout.cell_count(), kUnreachable);
    const std::size_t source = layout.exit_cell(e);
    dist[source] = 0;
    std::deque<std::size_t> queue{source};
    while (!queue.empty()) {
      const std::size_t cell = queue.front();
      queue.pop_front();
      for (std::size_t n : layout.neighbors(cell)) {
        if (dist[n] == kUnreachable && layout.walkable(n)) {
          dist[n] = dist[cell] + 1;
          queue.push_back(n);
        }
      }
    }
    for (std::size_t s = 0; s < layout.seat_count(); ++s) {
      if (dist[layout.seat_cell(s)] == kUnreachable) {
        const CellPos p = layout.cell_pos(layout.seat_cell(s));
        throw LayoutError(fmt::format("seat {} at row {}, col {} cannot reach exit {}", s, p.row, p.col,
                                      layout.exits()[e].id));
      }
    }
    fields.per_exit.push_back(std::move(dist));
  }
  return fields;
}

std::vector<long> successor_map(const TheaterLayout& layout, const DistanceFields& fields, std::size_t exit_index) {
  const auto& dist = fields.per_exit.at(exit_index);
  std::vector<long> next(layout.cell_count(), kUnreachable);
  for (std::size_t cell = 0; cell < layout.cell_count(); ++cell) {
    if (dist[cell] <= 0) continue;
    // neighbors() is already in ascending row-major order, so the first hit wins ties.
    for (std::size_t n : layout.neighbors(cell)) {
      if (dist[n] == dist[cell] - 1) {
        next[cell] = static_cast<long>(n);
        break;
      }
    }
  }
  return next;
}

std::size_t RoutePlan::assigned_count() const {
  return static_cast<std::size_t>(std::count_if(exit_of_seat.begin(), exit_of_seat.end(), [](int e) { return e >= 0; }));
}

RoutePlan nearest_exit_plan(const TheaterLayout& layout, const DistanceFields& fields, const Occupancy& occupancy) {
  if (occupancy.size() != layout.seat_count()) {
    throw std::invalid_argument(
        fmt::format("occupancy covers {} seats, layout has {}", occupancy.size(), layout.seat_count()));
  }
  RoutePlan plan{std::vector<int>(layout.seat_count(), -1)};
  for (std::size_t s = 0; s < layout.seat_count(); ++s) {
    if (!occupancy[s]) continue;
    const std::size_t cell = layout.seat_cell(s);
    int best = 0;
    for (std::size_t e = 1; e < fields.per_exit.size(); ++e) {
      if (fields.distance(e, cell) < fields.distance(static_cast<std::size_t>(best), cell)) best = static_cast<int>(e);
    }
    plan.exit_of_seat[s] = best;
  }
  return plan;
}

RoutePlan nearest_exit_plan(const TheaterLayout& layout, const Occupancy& occupancy) {
  return nearest_exit_plan(layout, distance_fields(layout), occupancy);
}

RoutePlan restrict_plan(const RoutePlan& plan, const Occupancy& occupancy) {
  if (plan.exit_of_seat.size() != occupancy.size()) throw std::invalid_argument("plan and occupancy sizes differ");
  RoutePlan out = plan;
  for (std::size_t s = 0; s < occupancy.size(); ++s) {
    if (!occupancy[s]) out.exit_of_seat[s] = -1;
  }
  return out;
}

}  // namespace crowdcate::sim

#pragma once

#include <cstddef>
#include <vector>

#include "crowdcate/sim/layout.hpp"
#include "crowdcate/sim/types.hpp"

namespace crowdcate::sim {

inline constexpr int kUnreachable = -1;

/// Per-exit BFS step counts over walkable cells (4-neighbourhood). The exit cell itself has
/// distance 0; walls, other exits and unreachable cells hold kUnreachable.
struct DistanceFields {
  std::vector<std::vector<int>> per_exit;

  int distance(std::size_t exit_index, std::size_t cell) const { return per_exit[exit_index][cell]; }
};

/// Throws LayoutError if any seat cannot reach some exit.
DistanceFields distance_fields(const TheaterLayout& layout);

/// Next cell on the way to an exit: among neighbours one step closer, the lowest row-major
/// index. Entries are kUnreachable for cells without a successor.
std::vector<long> successor_map(const TheaterLayout& layout, const DistanceFields& fields, std::size_t exit_index);

/// Seat -> exit index (0-based, exit id - 1); -1 for seats without an agent.
struct RoutePlan {
  std::vector<int> exit_of_seat;

  std::size_t assigned_count() const;
  bool operator==(const RoutePlan&) const = default;
};

/// Each occupied seat goes to its closest exit; ties go to the lowest exit id.
RoutePlan nearest_exit_plan(const TheaterLayout& layout, const DistanceFields& fields, const Occupancy& occupancy);
RoutePlan nearest_exit_plan(const TheaterLayout& layout, const Occupancy& occupancy);

/// Restricts a full-house plan to the occupied seats.
RoutePlan restrict_plan(const RoutePlan& plan, const Occupancy& occupancy);

}  // namespace crowdcate::sim

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "crowdcate/sim/types.hpp"

namespace crowdcate::sim {

enum class CellKind : unsigned char { wall, aisle, seat, exit };

inline constexpr std::size_t kBlockCount = 4;
inline constexpr std::size_t kDefaultRows = 22;
inline constexpr std::size_t kDefaultCols = 42;
inline constexpr std::size_t kDefaultSeatCount = 868;

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CellPos {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const CellPos&) const = default;
};

struct ExitInfo {
  int id = 0;  // 1..6
  CellPos cell;
};

/// Theater floor as a rows x cols lattice. Seats are numbered in row-major order; that
/// number is the seat id used by Occupancy and RoutePlan.
class TheaterLayout {
 public:
  /// `grid` uses 'S' seat, '.' aisle, '#' wall, '1'..'6' exits; `blocks` has 'A'..'D' at
  /// every seat and '.' elsewhere. Both are row strings of equal width.
  TheaterLayout(const std::vector<std::string>& grid, const std::vector<std::string>& blocks);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t cell_count() const { return kinds_.size(); }
  std::size_t cell_index(std::size_t row, std::size_t col) const { return row * cols_ + col; }
  CellPos cell_pos(std::size_t index) const { return {index / cols_, index % cols_}; }
  CellKind kind(std::size_t cell) const { return kinds_[cell]; }
  bool walkable(std::size_t cell) const { return kinds_[cell] == CellKind::seat || kinds_[cell] == CellKind::aisle; }

  std::size_t seat_count() const { return seat_cells_.size(); }
  std::size_t seat_cell(std::size_t seat) const { return seat_cells_[seat]; }
  std::optional<std::size_t> seat_at(std::size_t cell) const;
  /// Block index 0..3 (A..D).
  std::size_t block_of_seat(std::size_t seat) const { return seat_blocks_[seat]; }
  std::size_t block_size(std::size_t block) const;

  const std::vector<ExitInfo>& exits() const { return exits_; }
  std::size_t exit_cell(std::size_t exit_index) const;

  /// Neighbours in the order up, left, right, down, which is ascending row-major index.
  std::vector<std::size_t> neighbors(std::size_t cell) const;

  /// Throws LayoutError unless: 6 exits with ids 1..6 on the boundary, 4 non-empty
  /// contiguous blocks, and every seat reaches every exit.
  void validate() const;

  std::string to_text() const;
  std::string hash() const;

  void set_kind(std::size_t cell, CellKind kind);

 private:
  void index_cells();

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<CellKind> kinds_;
  std::vector<char> block_letters_;
  std::vector<int> exit_ids_;
  std::vector<std::size_t> seat_cells_;
  std::vector<std::size_t> seat_blocks_;
  std::vector<long> seat_of_cell_;
  std::vector<ExitInfo> exits_;
};

TheaterLayout parse_layout(std::string_view text);
TheaterLayout load_layout(const std::filesystem::path& path);

/// Bundled 22x42 auditorium: 868 seats in blocks A (front left), B (front right),
/// C (rear left), D (rear right), a two-cell centre aisle, side cross-aisle stubs and six exits.
TheaterLayout build_default_layout();

}  // namespace crowdcate::sim

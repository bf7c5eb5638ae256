#include "crowdcate/sim/layout.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <sstream>

#include <fmt/format.h>

#include "crowdcate/common/digest.hpp"
#include "crowdcate/sim/routing.hpp"

namespace crowdcate::sim {

namespace {

constexpr std::string_view kHeader = "crowd-layout";

CellKind kind_from_char(char c, std::size_t row, std::size_t col) {
  switch (c) {
    case 'S':
      return CellKind::seat;
    case '.':
      return CellKind::aisle;
    case '#':
      return CellKind::wall;
    default:
      if (c >= '1' && c <= '6') return CellKind::exit;
  }
  throw LayoutError(fmt::format("unknown layout character '{}' at row {}, col {}", c, row, col));
}

}  // namespace

TheaterLayout::TheaterLayout(const std::vector<std::string>& grid, const std::vector<std::string>& blocks) {
  if (grid.empty() || grid.front().empty()) throw LayoutError("layout grid is empty");
  rows_ = grid.size();
  cols_ = grid.front().size();
  if (blocks.size() != rows_) {
    throw LayoutError(fmt::format("block table has {} rows, grid has {}", blocks.size(), rows_));
  }
  kinds_.resize(rows_ * cols_);
  block_letters_.assign(rows_ * cols_, '.');
  exit_ids_.assign(rows_ * cols_, 0);
  for (std::size_t r = 0; r < rows_; ++r) {
    if (grid[r].size() != cols_) throw LayoutError(fmt::format("grid row {} has width {}, expected {}", r, grid[r].size(), cols_));
    if (blocks[r].size() != cols_) {
      throw LayoutError(fmt::format("block row {} has width {}, expected {}", r, blocks[r].size(), cols_));
    }
    for (std::size_t c = 0; c < cols_; ++c) {
      const std::size_t cell = cell_index(r, c);
      kinds_[cell] = kind_from_char(grid[r][c], r, c);
      if (kinds_[cell] == CellKind::exit) exit_ids_[cell] = grid[r][c] - '0';
      const char b = blocks[r][c];
      if (kinds_[cell] == CellKind::seat) {
        if (b < 'A' || b > 'D') throw LayoutError(fmt::format("seat at row {}, col {} has no block letter", r, c));
        block_letters_[cell] = b;
      } else if (b != '.') {
        throw LayoutError(fmt::format("non-seat cell at row {}, col {} carries block letter '{}'", r, c, b));
      }
    }
  }
  index_cells();
}

void TheaterLayout::index_cells() {
  seat_cells_.clear();
  seat_blocks_.clear();
  exits_.clear();
  seat_of_cell_.assign(kinds_.size(), -1);
  for (std::size_t cell = 0; cell < kinds_.size(); ++cell) {
    if (kinds_[cell] == CellKind::seat) {
      seat_of_cell_[cell] = static_cast<long>(seat_cells_.size());
      seat_cells_.push_back(cell);
      seat_blocks_.push_back(static_cast<std::size_t>(block_letters_[cell] - 'A'));
    } else if (kinds_[cell] == CellKind::exit) {
      exits_.push_back({exit_ids_[cell], cell_pos(cell)});
    }
  }
  std::sort(exits_.begin(), exits_.end(), [](const ExitInfo& a, const ExitInfo& b) { return a.id < b.id; });
}

void TheaterLayout::set_kind(std::size_t cell, CellKind kind) {
  if (kind == CellKind::exit) throw LayoutError("set_kind cannot create exits");
  if (kinds_[cell] == CellKind::exit) exit_ids_[cell] = 0;
  kinds_[cell] = kind;
  if (kind == CellKind::seat && block_letters_[cell] == '.') block_letters_[cell] = 'A';
  if (kind != CellKind::seat) block_letters_[cell] = '.';
  index_cells();
}

std::optional<std::size_t> TheaterLayout::seat_at(std::size_t cell) const {
  if (seat_of_cell_[cell] < 0) return std::nullopt;
  return static_cast<std::size_t>(seat_of_cell_[cell]);
}

std::size_t TheaterLayout::block_size(std::size_t block) const {
  return static_cast<std::size_t>(std::count(seat_blocks_.begin(), seat_blocks_.end(), block));
}

std::size_t TheaterLayout::exit_cell(std::size_t exit_index) const {
  const CellPos p = exits_.at(exit_index).cell;
  return cell_index(p.row, p.col);
}

std::vector<std::size_t> TheaterLayout::neighbors(std::size_t cell) const {
  std::vector<std::size_t> out;
  out.reserve(4);
  const CellPos p = cell_pos(cell);
  if (p.row > 0) out.push_back(cell - cols_);
  if (p.col > 0) out.push_back(cell - 1);
  if (p.col + 1 < cols_) out.push_back(cell + 1);
  if (p.row + 1 < rows_) out.push_back(cell + cols_);
  return out;
}

void TheaterLayout::validate() const {
  if (exits_.size() != kExitCount) {
    throw LayoutError(fmt::format("layout has {} exits, expected {}", exits_.size(), kExitCount));
  }
  for (std::size_t i = 0; i < exits_.size(); ++i) {
    if (exits_[i].id != static_cast<int>(i + 1)) throw LayoutError("exit ids must be exactly 1..6");
    const CellPos p = exits_[i].cell;
    if (p.row != 0 && p.col != 0 && p.row + 1 != rows_ && p.col + 1 != cols_) {
      throw LayoutError(fmt::format("exit {} is not on the boundary", exits_[i].id));
    }
  }
  if (seat_cells_.empty()) throw LayoutError("layout has no seats");

  // distance_fields() rejects unreachable seats.
  (void)distance_fields(*this);

  for (std::size_t block = 0; block < kBlockCount; ++block) {
    std::vector<std::size_t> members;
    for (std::size_t s = 0; s < seat_cells_.size(); ++s) {
      if (seat_blocks_[s] == block) members.push_back(seat_cells_[s]);
    }
    if (members.empty()) throw LayoutError(fmt::format("block {} has no seats", static_cast<char>('A' + block)));
    std::vector<char> seen(kinds_.size(), 0);
    std::deque<std::size_t> queue{members.front()};
    seen[members.front()] = 1;
    std::size_t reached = 0;
    const char letter = static_cast<char>('A' + block);
    while (!queue.empty()) {
      const std::size_t cell = queue.front();
      queue.pop_front();
      ++reached;
      for (std::size_t n : neighbors(cell)) {
        if (!seen[n] && kinds_[n] == CellKind::seat && block_letters_[n] == letter) {
          seen[n] = 1;
          queue.push_back(n);
        }
      }
    }
    if (reached != members.size()) throw LayoutError(fmt::format("block {} is not contiguous", letter));
  }
}

std::string TheaterLayout::to_text() const {
  std::ostringstream out;
  out << kHeader << ' ' << rows_ << ' ' << cols_ << '\n';
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) {
      const std::size_t cell = cell_index(r, c);
      switch (kinds_[cell]) {
        case CellKind::seat:
          out << 'S';
          break;
        case CellKind::aisle:
          out << '.';
          break;
        case CellKind::wall:
          out << '#';
          break;
        case CellKind::exit:
          out << static_cast<char>('0' + exit_ids_[cell]);
          break;
      }
    }
    out << '\n';
  }
  out << "blocks\n";
  for (std::size_t r = 0; r < rows_; ++r) {
    out << std::string_view(block_letters_.data() + r * cols_, cols_) << '\n';
  }
  return out.str();
}

std::string TheaterLayout::hash() const { return sha256_hex(to_text()); }

TheaterLayout parse_layout(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string header;
  std::size_t rows = 0, cols = 0;
  if (!(in >> header >> rows >> cols) || header != kHeader || rows == 0 || cols == 0) {
    throw LayoutError("layout must start with 'crowd-layout <rows> <cols>'");
  }
  std::string line;
  std::getline(in, line);
  std::vector<std::string> grid, blocks;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw LayoutError(fmt::format("layout ends after {} grid rows", r));
    grid.push_back(line);
  }
  if (!std::getline(in, line) || line != "blocks") throw LayoutError("expected 'blocks' section after the grid");
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw LayoutError(fmt::format("block table ends after {} rows", r));
    blocks.push_back(line);
  }
  for (const auto& row : grid) {
    if (row.size() != cols) throw LayoutError(fmt::format("grid row width {} does not match header {}", row.size(), cols));
  }
  TheaterLayout layout(grid, blocks);
  layout.validate();
  return layout;
}

TheaterLayout load_layout(const std::filesystem::path& path) { return parse_layout(read_file(path)); }

TheaterLayout build_default_layout() {
  constexpr std::size_t rows = kDefaultRows, cols = kDefaultCols;
  constexpr std::size_t cross_row = 10;
  constexpr std::size_t stub_len = 5;
  std::vector<std::string> grid(rows, std::string(cols, 'S'));
  std::vector<std::string> blocks(rows, std::string(cols, '.'));
  for (std::size_t r = 0; r < rows; ++r) {
    grid[r][20] = '.';
    grid[r][21] = '.';
  }
  for (std::size_t c = 0; c < stub_len; ++c) {
    grid[cross_row][c] = '.';
    grid[cross_row][cols - 1 - c] = '.';
  }
  grid[0][0] = '1';
  grid[0][cols - 1] = '2';
  grid[cross_row][0] = '3';
  grid[cross_row][cols - 1] = '4';
  grid[rows - 1][20] = '5';
  grid[rows - 1][21] = '6';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (grid[r][c] != 'S') continue;
      const bool front = r < cross_row;
      const bool left = c < 20;
      blocks[r][c] = front ? (left ? 'A' : 'B') : (left ? 'C' : 'D');
    }
  }
  TheaterLayout layout(grid, blocks);
  layout.validate();
  if (layout.seat_count() != kDefaultSeatCount) {
    throw LayoutError(fmt::format("default layout has {} seats, expected {}", layout.seat_count(), kDefaultSeatCount));
  }
  return layout;
}

}  // namespace crowdcate::sim

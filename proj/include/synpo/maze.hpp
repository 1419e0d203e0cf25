// 16x16 wall layouts: procedural generation (recursive division plus random
// openings), connectivity checking, and the '#'/'.' text fixture format.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace synpo {

inline constexpr int kGridSize = 16;
inline constexpr int kGridCells = kGridSize * kGridSize;

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

class Maze {
 public:
  Maze() { walls_.fill(true); }

  int id() const { return id_; }
  void set_id(int id) { id_ = id; }
  uint64_t seed() const { return seed_; }

  bool wall(int row, int col) const { return walls_[row * kGridSize + col]; }
  bool wall(Cell c) const { return wall(c.row, c.col); }
  bool open(int row, int col) const { return !wall(row, col); }
  bool open(Cell c) const { return open(c.row, c.col); }
  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.row < kGridSize && c.col >= 0 && c.col < kGridSize;
  }

  void set_wall(int row, int col, bool v) { walls_[row * kGridSize + col] = v; }

  std::vector<Cell> open_cells() const;
  int open_count() const;

  // Every open cell reachable from every other (flood fill).
  bool connected() const;

  bool operator==(const Maze& o) const { return walls_ == o.walls_; }

  // Fixture format: header "maze <id>" then 16 rows of 16 '#'/'.' chars.
  std::string to_text() const;
  static Maze from_text(const std::string& text);
  static Maze load_file(const std::string& path);
  void save_file(const std::string& path) const;

  friend Maze generate_maze(uint64_t seed);

 private:
  std::array<bool, kGridCells> walls_;
  int id_ = -1;
  uint64_t seed_ = 0;
};

// Deterministic in `seed`; result is connected, boundary-walled, and at least
// 55% of interior cells are open.
Maze generate_maze(uint64_t seed);

// The twenty layouts used as the standard environment set. Environment id i
// maps to generate_maze(fixture_seed(i)).
uint64_t fixture_seed(int env_id);
Maze fixture_maze(int env_id);

}  // namespace synpo

#include "synpo/maze.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "synpo/rng.hpp"

namespace synpo {

std::vector<Cell> Maze::open_cells() const {
  std::vector<Cell> out;
  for (int r = 0; r < kGridSize; ++r)
    for (int c = 0; c < kGridSize; ++c)
      if (open(r, c)) out.push_back({r, c});
  return out;
}

int Maze::open_count() const {
  int n = 0;
  for (bool w : walls_)
    if (!w) ++n;
  return n;
}

bool Maze::connected() const {
  auto cells = open_cells();
  if (cells.empty()) return false;
  std::array<bool, kGridCells> seen{};
  std::vector<Cell> stack{cells[0]};
  seen[cells[0].row * kGridSize + cells[0].col] = true;
  int reached = 0;
  while (!stack.empty()) {
    Cell c = stack.back();
    stack.pop_back();
    ++reached;
    const Cell nbrs[4] = {{c.row - 1, c.col}, {c.row + 1, c.col}, {c.row, c.col - 1},
                          {c.row, c.col + 1}};
    for (Cell n : nbrs) {
      if (!in_bounds(n) || wall(n)) continue;
      bool& s = seen[n.row * kGridSize + n.col];
      if (!s) {
        s = true;
        stack.push_back(n);
      }
    }
  }
  return reached == static_cast<int>(cells.size());
}

std::string Maze::to_text() const {
  std::ostringstream os;
  os << "maze " << id_ << "\n";
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) os << (wall(r, c) ? '#' : '.');
    os << "\n";
  }
  return os.str();
}

Maze Maze::from_text(const std::string& text) {
  std::istringstream is(text);
  std::string tag;
  int id = -1;
  if (!(is >> tag >> id) || tag != "maze")
    throw std::runtime_error("maze fixture: expected header \"maze <id>\"");
  std::string line;
  std::getline(is, line);  // rest of header line
  Maze m;
  m.set_id(id);
  for (int r = 0; r < kGridSize; ++r) {
    if (!std::getline(is, line) || line.size() < kGridSize)
      throw std::runtime_error("maze fixture: expected 16 rows of 16 cells");
    for (int c = 0; c < kGridSize; ++c) {
      if (line[c] != '#' && line[c] != '.')
        throw std::runtime_error("maze fixture: invalid cell character");
      m.set_wall(r, c, line[c] == '#');
    }
  }
  return m;
}

Maze Maze::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open maze fixture: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return from_text(os.str());
}

void Maze::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write maze fixture: " + path);
  out << to_text();
}

namespace {

// Recursive division over the open rectangle [r0, r1) x [c0, c1): drop a wall
// line with one door, recurse on both halves. Wall lines sit on even
// coordinates and doors on odd ones, so later walls can never cover a door.
void divide(Maze& m, int r0, int r1, int c0, int c1, Rng& rng) {
  std::vector<int> rows, cols;
  for (int r = r0 + 1; r < r1 - 1; ++r)
    if (r % 2 == 0) rows.push_back(r);
  for (int c = c0 + 1; c < c1 - 1; ++c)
    if (c % 2 == 0) cols.push_back(c);
  if (rows.empty() && cols.empty()) return;

  bool horizontal;
  if (rows.empty())
    horizontal = false;
  else if (cols.empty())
    horizontal = true;
  else
    horizontal = (r1 - r0) == (c1 - c0) ? rng.bernoulli(0.5) : (r1 - r0) > (c1 - c0);

  if (horizontal) {
    const int wr = rows[rng.below(static_cast<int>(rows.size()))];
    std::vector<int> doors;
    for (int c = c0; c < c1; ++c)
      if (c % 2 == 1) doors.push_back(c);
    const int door = doors[rng.below(static_cast<int>(doors.size()))];
    for (int c = c0; c < c1; ++c)
      if (c != door) m.set_wall(wr, c, true);
    divide(m, r0, wr, c0, c1, rng);
    divide(m, wr + 1, r1, c0, c1, rng);
  } else {
    const int wc = cols[rng.below(static_cast<int>(cols.size()))];
    std::vector<int> doors;
    for (int r = r0; r < r1; ++r)
      if (r % 2 == 1) doors.push_back(r);
    const int door = doors[rng.below(static_cast<int>(doors.size()))];
    for (int r = r0; r < r1; ++r)
      if (r != door) m.set_wall(r, wc, true);
    divide(m, r0, r1, c0, wc, rng);
    divide(m, r0, r1, wc + 1, c1, rng);
  }
}

Maze try_generate(uint64_t seed) {
  Rng rng(seed);
  Maze m;
  for (int r = 1; r < kGridSize - 1; ++r)
    for (int c = 1; c < kGridSize - 1; ++c) m.set_wall(r, c, false);
  divide(m, 1, kGridSize - 1, 1, kGridSize - 1, rng);

  // Knock out walls until the interior is at least 55% open; the extra
  // openings add loops, keeping layouts maze-like but navigable.
  constexpr int kInterior = (kGridSize - 2) * (kGridSize - 2);
  const int target = (kInterior * 55 + 99) / 100;
  int open = 0;
  for (int r = 1; r < kGridSize - 1; ++r)
    for (int c = 1; c < kGridSize - 1; ++c)
      if (m.open(r, c)) ++open;
  int guard = 10000;
  while (open < target && guard-- > 0) {
    const int r = 1 + rng.below(kGridSize - 2);
    const int c = 1 + rng.below(kGridSize - 2);
    if (m.wall(r, c)) {
      m.set_wall(r, c, false);
      ++open;
    }
  }
  return m;
}

}  // namespace

Maze generate_maze(uint64_t seed) {
  uint64_t s = seed;
  for (int attempt = 0; attempt < 64; ++attempt) {
    Maze m = try_generate(s);
    if (m.connected() && m.open_count() >= 7) {
      m.seed_ = seed;
      return m;
    }
    s = splitmix64(s);
  }
  throw std::runtime_error("generate_maze: no connected layout found");
}

uint64_t fixture_seed(int env_id) {
  if (env_id < 0) throw std::invalid_argument("fixture_seed: negative environment id");
  return derive_seed({0x6d617a65ULL, static_cast<uint64_t>(env_id)});
}

Maze fixture_maze(int env_id) {
  Maze m = generate_maze(fixture_seed(env_id));
  m.set_id(env_id);
  return m;
}

}  // namespace synpo

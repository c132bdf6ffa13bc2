#include "goalnav/world/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>

namespace goalnav::world {

OccupancyGrid::OccupancyGrid(int width, int height, double cell_size, std::uint64_t seed)
    : width_(width), height_(height), cell_size_(cell_size), seed_(seed) {
  if (width <= 0 || height <= 0) throw UsageError("grid dimensions must be positive");
  if (!(cell_size > 0.0)) throw UsageError("cell_size must be positive");
  cells_.assign(static_cast<std::size_t>(width) * height, 1);
  colors_.assign(cells_.size(), 0);
}

OccupancyGrid OccupancyGrid::from_ascii(const std::vector<std::string>& rows, double cell_size) {
  if (rows.empty()) throw UsageError("empty ascii grid");
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows.front().size());
  OccupancyGrid g(w, h, cell_size);
  for (int y = 0; y < h; ++y) {
    if (static_cast<int>(rows[y].size()) != w) throw UsageError("ragged ascii grid");
    for (int x = 0; x < w; ++x) {
      const char ch = rows[y][x];
      g.set_occupied(x, y, ch != '.');
      if (ch >= '0' && ch <= '9') g.set_color(x, y, static_cast<std::uint8_t>(ch - '0'));
    }
  }
  return g;
}

Cell OccupancyGrid::cell_of(double x, double y) const {
  return {static_cast<int>(std::floor(x / cell_size_)), static_cast<int>(std::floor(y / cell_size_))};
}

bool OccupancyGrid::point_free(double x, double y) const {
  const Cell c = cell_of(x, y);
  return free(c.x, c.y);
}

std::vector<Cell> OccupancyGrid::free_cells() const {
  std::vector<Cell> out;
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      if (free(x, y)) out.push_back({x, y});
  return out;
}

int OccupancyGrid::free_components() const {
  std::vector<int> label(cells_.size(), -1);
  int components = 0;
  std::queue<Cell> q;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (occupied(x, y) || label[index(x, y)] >= 0) continue;
      label[index(x, y)] = components;
      q.push({x, y});
      while (!q.empty()) {
        const Cell c = q.front();
        q.pop();
        constexpr int dx[] = {1, -1, 0, 0};
        constexpr int dy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = c.x + dx[k], ny = c.y + dy[k];
          if (free(nx, ny) && label[index(nx, ny)] < 0) {
            label[index(nx, ny)] = components;
            q.push({nx, ny});
          }
        }
      }
      ++components;
    }
  }
  return components;
}

bool OccupancyGrid::border_occupied() const {
  for (int x = 0; x < width_; ++x) {
    if (free(x, 0) || free(x, height_ - 1)) return false;
  }
  for (int y = 0; y < height_; ++y) {
    if (free(0, y) || free(width_ - 1, y)) return false;
  }
  return true;
}

namespace {

struct Span {
  int start;
  int length;
};

// Splits the interior [1, n - 2] into room spans separated by one-cell walls.
std::vector<Span> split_axis(int n, std::mt19937_64& rng) {
  std::vector<Span> spans;
  int start = 1;
  std::uniform_int_distribution<int> len_dist(5, 9);
  while (true) {
    const int remaining = n - 1 - start;
    if (remaining <= 11) {
      spans.push_back({start, remaining});
      break;
    }
    const int len = len_dist(rng);
    spans.push_back({start, len});
    start += len + 1;
  }
  return spans;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

OccupancyGrid try_generate(std::uint64_t seed, int n, double cell_size, std::uint64_t attempt) {
  std::mt19937_64 rng(mix(seed, attempt));
  OccupancyGrid g(n, n, cell_size, seed);
  const auto xs = split_axis(n, rng);
  const auto ys = split_axis(n, rng);
  const int rx = static_cast<int>(xs.size()), ry = static_cast<int>(ys.size());

  auto carve = [&](int x0, int y0, int w, int h) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) g.set_occupied(x, y, false);
  };
  for (const auto& sy : ys)
    for (const auto& sx : xs) carve(sx.start, sy.start, sx.length, sy.length);

  // Openings between room (i, j) and its east (dir 0) or south (dir 1) neighbour.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto open_between = [&](int i, int j, int dir, bool whole_wall) {
    if (dir == 0) {
      const int wall_x = xs[i].start + xs[i].length;
      const Span s = ys[j];
      int w = whole_wall ? s.length : std::min(s.length, s.length >= 7 ? 3 : 2);
      const int y0 = s.start + std::uniform_int_distribution<int>(0, s.length - w)(rng);
      carve(wall_x, y0, 1, w);
    } else {
      const int wall_y = ys[j].start + ys[j].length;
      const Span s = xs[i];
      int w = whole_wall ? s.length : std::min(s.length, s.length >= 7 ? 3 : 2);
      const int x0 = s.start + std::uniform_int_distribution<int>(0, s.length - w)(rng);
      carve(x0, wall_y, w, 1);
    }
  };

  // Random spanning tree over the room lattice guarantees connectivity.
  std::vector<char> visited(static_cast<std::size_t>(rx) * ry, 0);
  std::vector<std::pair<int, int>> stack;
  const int s0 = std::uniform_int_distribution<int>(0, rx * ry - 1)(rng);
  stack.emplace_back(s0 % rx, s0 / rx);
  visited[s0] = 1;
  std::vector<std::array<int, 3>> tree_edges;  // (i, j, dir) in canonical form
  while (!stack.empty()) {
    auto [i, j] = stack.back();
    std::array<std::pair<int, int>, 4> nbrs{{{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}}};
    std::shuffle(nbrs.begin(), nbrs.end(), rng);
    bool advanced = false;
    for (auto [ni, nj] : nbrs) {
      if (ni < 0 || nj < 0 || ni >= rx || nj >= ry || visited[nj * rx + ni]) continue;
      visited[nj * rx + ni] = 1;
      if (ni != i) tree_edges.push_back({std::min(i, ni), j, 0});
      else tree_edges.push_back({i, std::min(j, nj), 1});
      stack.emplace_back(ni, nj);
      advanced = true;
      break;
    }
    if (!advanced) stack.pop_back();
  }
  for (const auto& e : tree_edges) open_between(e[0], e[1], e[2], unit(rng) < 0.12);
  // Extra openings create loops.
  for (int j = 0; j < ry; ++j)
    for (int i = 0; i < rx; ++i) {
      if (i + 1 < rx && unit(rng) < 0.2) open_between(i, j, 0, false);
      if (j + 1 < ry && unit(rng) < 0.2) open_between(i, j, 1, false);
    }

  // Wall colours: one palette entry per coarse wall segment.
  const std::uint64_t color_key = mix(seed, 0xC0105ull);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (g.free(x, y)) continue;
      g.set_color(x, y, static_cast<std::uint8_t>(mix(color_key, (y / 4) * 1024 + x / 4) % kPaletteSize));
    }

  // Pillars inside rooms, kept only if free space stays connected.
  for (const auto& sy : ys)
    for (const auto& sx : xs) {
      if (sx.length < 7 || sy.length < 7 || unit(rng) >= 0.35) continue;
      const int size = unit(rng) < 0.5 ? 1 : 2;
      const int px = sx.start + 2 + std::uniform_int_distribution<int>(0, sx.length - 4 - size)(rng);
      const int py = sy.start + 2 + std::uniform_int_distribution<int>(0, sy.length - 4 - size)(rng);
      const auto color = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, kPaletteSize - 1)(rng));
      for (int y = py; y < py + size; ++y)
        for (int x = px; x < px + size; ++x) {
          g.set_occupied(x, y, true);
          g.set_color(x, y, color);
        }
      if (g.free_components() != 1) {
        for (int y = py; y < py + size; ++y)
          for (int x = px; x < px + size; ++x) g.set_occupied(x, y, false);
      }
    }
  return g;
}

}  // namespace

OccupancyGrid generate_world(std::uint64_t seed, double size_m, double cell_size) {
  if (!(size_m >= 4.0)) throw UsageError("world size must be at least 4 m");
  if (!(cell_size > 0.0)) throw UsageError("cell_size must be positive");
  const int n = static_cast<int>(std::lround(size_m / cell_size));
  if (n < 13) throw UsageError("world too small for the chosen cell size");
  for (std::uint64_t attempt = 0; attempt < 16; ++attempt) {
    OccupancyGrid g = try_generate(seed, n, cell_size, attempt);
    if (g.border_occupied() && g.free_components() == 1) return g;
  }
  throw GenerationError("world generation failed to produce a connected layout for seed " +
                        std::to_string(seed));
}

}  // namespace goalnav::world

#include "goalnav/world/geodesic.hpp"

#include <cmath>
#include <queue>
#include <tuple>

namespace goalnav::world {

namespace {
struct Move {
  int dx, dy;
  bool diagonal;
};
constexpr Move kMoves[] = {{1, 0, false},  {-1, 0, false}, {0, 1, false},  {0, -1, false},
                           {1, 1, true},   {1, -1, true},  {-1, 1, true},  {-1, -1, true}};

bool move_allowed(const OccupancyGrid& g, Cell c, const Move& m) {
  if (g.occupied(c.x + m.dx, c.y + m.dy)) return false;
  if (m.diagonal && (g.occupied(c.x + m.dx, c.y) || g.occupied(c.x, c.y + m.dy))) return false;
  return true;
}
}  // namespace

DistanceField::DistanceField(const OccupancyGrid& grid, Cell source)
    : width_(grid.width()), height_(grid.height()), cell_size_(grid.cell_size()), source_(source) {
  const std::size_t n = static_cast<std::size_t>(width_) * height_;
  straight_.assign(n, 0);
  diagonal_.assign(n, 0);
  reached_.assign(n, 0);
  if (grid.occupied(source)) return;

  std::vector<char> done(n, 0);
  using Item = std::tuple<double, int, int>;  // length, x, y
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  reached_[grid.index(source.x, source.y)] = 1;
  queue.emplace(0.0, source.x, source.y);
  while (!queue.empty()) {
    const auto [len, x, y] = queue.top();
    queue.pop();
    const std::size_t i = grid.index(x, y);
    if (done[i]) continue;
    done[i] = 1;
    for (const Move& m : kMoves) {
      if (!move_allowed(grid, {x, y}, m)) continue;
      const int nx = x + m.dx, ny = y + m.dy;
      const std::size_t j = grid.index(nx, ny);
      if (done[j]) continue;
      const int s = straight_[i] + (m.diagonal ? 0 : 1);
      const int d = diagonal_[i] + (m.diagonal ? 1 : 0);
      const double cand = path_length_cells(s, d);
      if (!reached_[j] || cand < path_length_cells(straight_[j], diagonal_[j])) {
        reached_[j] = 1;
        straight_[j] = s;
        diagonal_[j] = d;
        queue.emplace(cand, nx, ny);
      }
    }
  }
}

double DistanceField::at(Cell c) const {
  if (c.x < 0 || c.y < 0 || c.x >= width_ || c.y >= height_) return kUnreachable;
  const std::size_t i = static_cast<std::size_t>(c.y) * width_ + c.x;
  if (!reached_[i]) return kUnreachable;
  return path_length_cells(straight_[i], diagonal_[i]) * cell_size_;
}

double DistanceField::at_point(double x, double y) const {
  return at({static_cast<int>(std::floor(x / cell_size_)), static_cast<int>(std::floor(y / cell_size_))});
}

std::vector<Cell> DistanceField::path_to_source(Cell from) const {
  std::vector<Cell> path;
  if (at(from) == kUnreachable) return path;
  path.push_back(from);
  Cell cur = from;
  while (!(cur == source_)) {
    Cell best = cur;
    double best_d = at(cur);
    for (const Move& m : kMoves) {
      const Cell nb{cur.x + m.dx, cur.y + m.dy};
      const double d = at(nb);
      if (d == kUnreachable) continue;
      // Reachability of both cells implies free; check corner rule explicitly.
      if (m.diagonal && (at({cur.x + m.dx, cur.y}) == kUnreachable ||
                         at({cur.x, cur.y + m.dy}) == kUnreachable)) {
        continue;
      }
      if (d < best_d) {
        best_d = d;
        best = nb;
      }
    }
    if (best == cur) break;
    cur = best;
    path.push_back(cur);
  }
  return path;
}

double geodesic_distance(const OccupancyGrid& grid, const Pose& a, const Pose& b) {
  const Cell ca = grid.cell_of(a.x, a.y), cb = grid.cell_of(b.x, b.y);
  if (grid.occupied(ca) || grid.occupied(cb)) throw UsageError("geodesic endpoints must be in free cells");
  return DistanceField(grid, ca).at(cb);
}

}  // namespace goalnav::world

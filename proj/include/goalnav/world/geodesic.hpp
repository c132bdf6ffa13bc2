#pragma once

#include <limits>
#include <vector>

#include "goalnav/world/agent.hpp"
#include "goalnav/world/grid.hpp"

namespace goalnav::world {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

/// Shortest-path distances from one source cell over free cells,
/// 8-connected with diagonal cost sqrt(2) * cell_size. Diagonal moves may not
/// cut a corner (both orthogonal neighbours must be free).
class DistanceField {
 public:
  DistanceField() = default;
  DistanceField(const OccupancyGrid& grid, Cell source);

  Cell source() const { return source_; }
  /// Metres; kUnreachable for occupied or disconnected cells.
  double at(Cell c) const;
  double at_point(double x, double y) const;
  /// Cells from `from` to the source following steepest descent.
  std::vector<Cell> path_to_source(Cell from) const;

 private:
  int width_ = 0, height_ = 0;
  double cell_size_ = 0.0;
  Cell source_;
  // Each distance is a count of straight and diagonal moves, so lengths are
  // evaluated exactly the same way regardless of traversal order.
  std::vector<int> straight_, diagonal_;
  std::vector<char> reached_;
};

/// Geodesic distance in metres between the cells containing a and b.
double geodesic_distance(const OccupancyGrid& grid, const Pose& a, const Pose& b);

/// Exact step-count representation of a path length in cell units.
inline double path_length_cells(int straight, int diagonal) {
  return straight + diagonal * 1.4142135623730951;
}

}  // namespace goalnav::world

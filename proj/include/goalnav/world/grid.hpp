#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace goalnav::world {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline constexpr int kPaletteSize = 12;

/// Floorplan of square cells. Cell (x, y) covers
/// [x * cell_size, (x + 1) * cell_size) x [y * cell_size, (y + 1) * cell_size).
/// Anything outside the grid counts as occupied.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(int width, int height, double cell_size, std::uint64_t seed = 0);

  /// Rows of '#' (wall) and '.' (free); digits 0-9 set a wall colour id.
  static OccupancyGrid from_ascii(const std::vector<std::string>& rows, double cell_size);

  int width() const { return width_; }
  int height() const { return height_; }
  double cell_size() const { return cell_size_; }
  std::uint64_t seed() const { return seed_; }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  bool occupied(int x, int y) const {
    return !in_bounds(x, y) || cells_[index(x, y)] != 0;
  }
  bool free(int x, int y) const { return !occupied(x, y); }
  bool occupied(Cell c) const { return occupied(c.x, c.y); }
  void set_occupied(int x, int y, bool occ) { cells_.at(index(x, y)) = occ ? 1 : 0; }

  std::uint8_t color(int x, int y) const { return in_bounds(x, y) ? colors_[index(x, y)] : 0; }
  void set_color(int x, int y, std::uint8_t id) { colors_.at(index(x, y)) = id % kPaletteSize; }

  Cell cell_of(double x, double y) const;
  bool point_free(double x, double y) const;
  std::pair<double, double> center_of(Cell c) const {
    return {(c.x + 0.5) * cell_size_, (c.y + 0.5) * cell_size_};
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + x;
  }

  std::vector<Cell> free_cells() const;
  /// Number of 4-connected components of free space.
  int free_components() const;
  bool border_occupied() const;

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  double cell_size_ = 0.25;
  std::uint64_t seed_ = 0;
  std::vector<std::uint8_t> cells_;
  std::vector<std::uint8_t> colors_;
};

/// Procedural rooms-and-doors floorplan of size_m x size_m metres.
/// Deterministic in `seed`; throws GenerationError (naming the seed) if no
/// connected layout is found after bounded retries.
OccupancyGrid generate_world(std::uint64_t seed, double size_m, double cell_size = 0.25);

}  // namespace goalnav::world

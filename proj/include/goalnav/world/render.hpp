#pragma once

#include <array>
#include <vector>

#include "goalnav/world/agent.hpp"
#include "goalnav/world/grid.hpp"

namespace goalnav::world {

/// Planar RGB image (3 x height x width), values in [0, 1].
struct RGBImage {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  RGBImage() = default;
  RGBImage(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, 0.0f) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  friend bool operator==(const RGBImage&, const RGBImage&) = default;
};

struct CameraSpec {
  double hfov_deg = 90.0;
  int resolution = 64;
  double wall_height = 2.5;  // metres
  double eye_height = 1.25;
};

std::array<float, 3> palette_color(int id);

/// Column-wise raycast of the grid from `pose`: shaded, striped walls between
/// a ceiling band and a tiled floor. Throws UsageError for poses in occupied
/// cells or a field of view outside (30, 150) degrees.
RGBImage render(const OccupancyGrid& grid, const Pose& pose, const CameraSpec& camera = {});

}  // namespace goalnav::world

#include "goalnav/world/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace goalnav::world {

namespace {

constexpr std::array<std::array<float, 3>, kPaletteSize> kPalette{{
    {0.90f, 0.20f, 0.20f},  // red
    {0.20f, 0.70f, 0.25f},  // green
    {0.20f, 0.35f, 0.90f},  // blue
    {0.95f, 0.80f, 0.15f},  // yellow
    {0.70f, 0.25f, 0.80f},  // purple
    {0.15f, 0.80f, 0.80f},  // cyan
    {0.95f, 0.55f, 0.15f},  // orange
    {0.55f, 0.35f, 0.20f},  // brown
    {0.95f, 0.50f, 0.70f},  // pink
    {0.50f, 0.75f, 0.20f},  // lime
    {0.30f, 0.30f, 0.45f},  // slate
    {0.85f, 0.85f, 0.80f},  // off-white
}};

constexpr std::array<float, 3> kCeiling{0.78f, 0.78f, 0.82f};
constexpr std::array<float, 3> kFloor{0.45f, 0.40f, 0.35f};

float shade(double distance) { return static_cast<float>(1.0 / (1.0 + 0.25 * distance)); }

// Snaps the heading to a 2^-30 rad lattice so that theta and theta + 2*pi
// render identically despite rounding in the wrap.
double canonical_heading(double theta) {
  double a = std::ldexp(std::round(std::ldexp(wrap_angle(theta), 30)), -30);
  if (a >= 2.0 * std::numbers::pi) a = 0.0;
  return a;
}

}  // namespace

std::array<float, 3> palette_color(int id) {
  return kPalette[static_cast<std::size_t>(((id % kPaletteSize) + kPaletteSize) % kPaletteSize)];
}

RGBImage render(const OccupancyGrid& grid, const Pose& pose, const CameraSpec& camera) {
  if (!(camera.hfov_deg > 30.0 && camera.hfov_deg < 150.0)) {
    throw UsageError("horizontal field of view must lie in (30, 150) degrees");
  }
  if (camera.resolution <= 0) throw UsageError("resolution must be positive");
  if (!pose_valid(grid, pose)) throw UsageError("cannot render from a pose inside an occupied cell");

  const int res = camera.resolution;
  RGBImage img(res, res);
  const double cs = grid.cell_size();
  const double theta = canonical_heading(pose.theta);
  const double dir_x = std::cos(theta), dir_y = std::sin(theta);
  const double left_x = -dir_y, left_y = dir_x;
  const double tan_half = std::tan(camera.hfov_deg * std::numbers::pi / 360.0);
  const double focal = 0.5 * res / tan_half;
  const double horizon = 0.5 * res;
  const double px = pose.x / cs, py = pose.y / cs;

  for (int col = 0; col < res; ++col) {
    const double s = (1.0 - 2.0 * (col + 0.5) / res) * tan_half;
    const double rx = dir_x + s * left_x, ry = dir_y + s * left_y;

    // Grid traversal (DDA). Distances are measured along the view axis.
    int mx = static_cast<int>(std::floor(px)), my = static_cast<int>(std::floor(py));
    const double ddx = rx == 0.0 ? 1e30 : std::abs(1.0 / rx);
    const double ddy = ry == 0.0 ? 1e30 : std::abs(1.0 / ry);
    const int step_x = rx < 0 ? -1 : 1, step_y = ry < 0 ? -1 : 1;
    double side_x = rx < 0 ? (px - mx) * ddx : (mx + 1.0 - px) * ddx;
    double side_y = ry < 0 ? (py - my) * ddy : (my + 1.0 - py) * ddy;
    int side = 0;
    const int max_iter = 4 * (grid.width() + grid.height());
    for (int it = 0; it < max_iter; ++it) {
      if (side_x < side_y) {
        side_x += ddx;
        mx += step_x;
        side = 0;
      } else {
        side_y += ddy;
        my += step_y;
        side = 1;
      }
      if (grid.occupied(mx, my)) break;
    }
    const double perp_cells = side == 0 ? side_x - ddx : side_y - ddy;
    const double dist = std::max(perp_cells * cs, 1e-3);
    const double hit_u = side == 0 ? (py + perp_cells * ry) * cs : (px + perp_cells * rx) * cs;
    const int color_id = grid.color(mx, my);
    const auto base = palette_color(color_id);
    const double freq = 2.0 + color_id % 3;
    const float stripe = (static_cast<long>(std::floor(hit_u * freq)) & 1) ? 0.72f : 1.0f;
    const float wall_gain = shade(dist) * stripe * (side == 1 ? 0.8f : 1.0f);

    const double top = horizon - focal * (camera.wall_height - camera.eye_height) / dist;
    const double bottom = horizon + focal * camera.eye_height / dist;

    for (int row = 0; row < res; ++row) {
      const double v = row + 0.5;
      std::array<float, 3> rgb;
      if (v < top) {
        const double d = focal * (camera.wall_height - camera.eye_height) / std::max(horizon - v, 1e-6);
        const float g = 0.6f + 0.4f * shade(d);
        rgb = {kCeiling[0] * g, kCeiling[1] * g, kCeiling[2] * g};
      } else if (v < bottom) {
        rgb = {base[0] * wall_gain, base[1] * wall_gain, base[2] * wall_gain};
      } else {
        const double d = focal * camera.eye_height / std::max(v - horizon, 1e-6);
        const double wx = pose.x + d * rx, wy = pose.y + d * ry;
        const bool odd = (static_cast<long>(std::floor(wx)) + static_cast<long>(std::floor(wy))) & 1;
        const float g = shade(d) * (odd ? 0.8f : 1.0f);
        rgb = {kFloor[0] * g, kFloor[1] * g, kFloor[2] * g};
      }
      for (int c = 0; c < 3; ++c) img.at(c, row, col) = std::clamp(rgb[c], 0.0f, 1.0f);
    }
  }
  return img;
}

}  // namespace goalnav::world

#include "goalnav/world/agent.hpp"

#include <cmath>

namespace goalnav::world {

std::string_view to_string(Action a) {
  switch (a) {
    case Action::kMoveForward: return "MOVE_FORWARD";
    case Action::kTurnLeft: return "TURN_LEFT";
    case Action::kTurnRight: return "TURN_RIGHT";
    case Action::kStop: return "STOP";
  }
  return "UNKNOWN";
}

std::optional<Action> action_from_index(int index) {
  if (index < 0 || index >= kNumActions) return std::nullopt;
  return static_cast<Action>(index);
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a, two_pi);
  if (r < 0.0) r += two_pi;
  if (r >= two_pi) r -= two_pi;
  return r;
}

double angle_diff(double a, double b) {
  double d = wrap_angle(a - b);
  if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  return d;
}

bool pose_valid(const OccupancyGrid& grid, const Pose& pose) {
  return std::isfinite(pose.x) && std::isfinite(pose.y) && grid.point_free(pose.x, pose.y);
}

bool segment_clear(const OccupancyGrid& grid, double x0, double y0, double x1, double y1,
                   double clearance) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int samples = std::max(1, static_cast<int>(std::ceil(len / (0.25 * grid.cell_size())))) ;
  for (int i = 0; i <= samples; ++i) {
    const double t = static_cast<double>(i) / samples;
    const double px = x0 + t * (x1 - x0), py = y0 + t * (y1 - y0);
    if (!grid.point_free(px - clearance, py - clearance) ||
        !grid.point_free(px + clearance, py - clearance) ||
        !grid.point_free(px - clearance, py + clearance) ||
        !grid.point_free(px + clearance, py + clearance)) {
      return false;
    }
  }
  return true;
}

StepResult step(const OccupancyGrid& grid, const Pose& pose, Action action,
                const MotionSpec& motion) {
  const double turn = motion.turn_deg * std::numbers::pi / 180.0;
  switch (action) {
    case Action::kMoveForward: {
      const double nx = pose.x + motion.forward_step * std::cos(pose.theta);
      const double ny = pose.y + motion.forward_step * std::sin(pose.theta);
      if (!segment_clear(grid, pose.x, pose.y, nx, ny, motion.clearance)) {
        return {pose, true};
      }
      return {{nx, ny, pose.theta}, false};
    }
    case Action::kTurnLeft: return {{pose.x, pose.y, wrap_angle(pose.theta + turn)}, false};
    case Action::kTurnRight: return {{pose.x, pose.y, wrap_angle(pose.theta - turn)}, false};
    case Action::kStop: return {pose, false};
  }
  return {pose, false};
}

}  // namespace goalnav::world

#pragma once

#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "goalnav/world/grid.hpp"

namespace goalnav::world {

enum class Action : int { kMoveForward = 0, kTurnLeft = 1, kTurnRight = 2, kStop = 3 };
inline constexpr int kNumActions = 4;

std::string_view to_string(Action a);
std::optional<Action> action_from_index(int index);

/// Position in metres, heading in radians in [0, 2*pi); theta = 0 faces +x
/// and positive rotation turns toward +y.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  friend bool operator==(const Pose&, const Pose&) = default;
};

struct MotionSpec {
  double forward_step = 0.25;  // metres
  double turn_deg = 30.0;
  double clearance = 0.1;  // body half-extent used for collision checks
};

/// Wraps to [0, 2*pi).
double wrap_angle(double a);
/// Signed difference a - b wrapped to (-pi, pi].
double angle_diff(double a, double b);

bool pose_valid(const OccupancyGrid& grid, const Pose& pose);

/// True when a square body of half-extent `clearance` can sweep the segment
/// without touching an occupied cell.
bool segment_clear(const OccupancyGrid& grid, double x0, double y0, double x1, double y1,
                   double clearance);

struct StepResult {
  Pose pose;
  bool collided = false;
};

/// Applies one discrete action. Forward moves that would touch an occupied
/// cell are blocked: the pose is unchanged and `collided` is set.
StepResult step(const OccupancyGrid& grid, const Pose& pose, Action action,
                const MotionSpec& motion = {});

}  // namespace goalnav::world

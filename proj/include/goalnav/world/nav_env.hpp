#pragma once

#include <memory>

#include "goalnav/world/agent.hpp"
#include "goalnav/world/episode.hpp"
#include "goalnav/world/geodesic.hpp"
#include "goalnav/world/render.hpp"

namespace goalnav::world {

struct EnvSpec {
  double success_radius = kSuccessRadius;
  int max_steps = 500;
  MotionSpec motion;
  CameraSpec camera;
};

struct EnvStep {
  bool collided = false;
  bool stopped = false;
  bool done = false;
  bool success = false;
};

/// Single-agent navigation episode over an immutable shared world.
class NavEnv {
 public:
  explicit NavEnv(EnvSpec spec = {}) : spec_(spec) {}

  void reset(std::shared_ptr<const OccupancyGrid> grid, const Episode& episode);
  /// Throws UsageError when called on a finished episode.
  EnvStep step(Action action);

  const RGBImage& observation() const { return observation_; }
  const RGBImage& goal_image() const { return episode_.goal_image; }
  const Pose& pose() const { return pose_; }
  void set_pose(const Pose& pose);
  /// Resumes a saved episode mid-way (used when restoring a checkpoint).
  void restore(std::shared_ptr<const OccupancyGrid> grid, const Episode& episode, const Pose& pose, int steps,
               double path_length);
  const Episode& episode() const { return episode_; }
  const OccupancyGrid& grid() const { return *grid_; }
  std::shared_ptr<const OccupancyGrid> grid_ptr() const { return grid_; }
  const EnvSpec& spec() const { return spec_; }
  const DistanceField& goal_field() const { return goal_field_; }

  int steps() const { return steps_; }
  bool done() const { return done_; }
  double path_length() const { return path_length_; }
  double geodesic_to_goal() const { return geodesic_to_goal(pose_); }
  double geodesic_to_goal(const Pose& p) const { return goal_field_.at_point(p.x, p.y); }
  double euclidean_to_goal() const;

 private:
  EnvSpec spec_;
  std::shared_ptr<const OccupancyGrid> grid_;
  Episode episode_;
  DistanceField goal_field_;
  Pose pose_;
  RGBImage observation_;
  int steps_ = 0;
  bool done_ = true;
  double path_length_ = 0.0;
};

/// Scripted shortest-path follower: heads for the farthest visible cell on
/// the geodesic path, picking among the reachable 30-degree headings, and
/// stops once within `stop_radius` of the goal.
class OraclePilot {
 public:
  explicit OraclePilot(double stop_radius = 0.5, int lookahead = 8)
      : stop_radius_(stop_radius), lookahead_(lookahead) {}

  Action act(const NavEnv& env) const;
  Action act(const OccupancyGrid& grid, const DistanceField& goal_field, const Pose& goal,
             const Pose& pose, const MotionSpec& motion) const;

 private:
  double stop_radius_;
  int lookahead_;
};

}  // namespace goalnav::world

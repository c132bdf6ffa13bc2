#include "goalnav/world/nav_env.hpp"

#include <cmath>

namespace goalnav::world {

void NavEnv::reset(std::shared_ptr<const OccupancyGrid> grid, const Episode& episode) {
  if (!grid) throw UsageError("reset needs a world");
  if (!pose_valid(*grid, episode.start) || !pose_valid(*grid, episode.goal)) {
    throw UsageError("episode " + std::to_string(episode.id) + " has poses outside free space");
  }
  grid_ = std::move(grid);
  episode_ = episode;
  goal_field_ = DistanceField(*grid_, grid_->cell_of(episode.goal.x, episode.goal.y));
  pose_ = episode.start;
  steps_ = 0;
  done_ = false;
  path_length_ = 0.0;
  observation_ = render(*grid_, pose_, spec_.camera);
}

void NavEnv::set_pose(const Pose& pose) {
  if (!grid_ || !pose_valid(*grid_, pose)) throw UsageError("set_pose: pose outside free space");
  pose_ = pose;
  observation_ = render(*grid_, pose_, spec_.camera);
}

void NavEnv::restore(std::shared_ptr<const OccupancyGrid> grid, const Episode& episode, const Pose& pose,
                     int steps, double path_length) {
  reset(std::move(grid), episode);
  if (steps < 0 || steps >= spec_.max_steps) throw UsageError("restore: step count out of range");
  set_pose(pose);
  steps_ = steps;
  path_length_ = path_length;
}

double NavEnv::euclidean_to_goal() const {
  return std::hypot(pose_.x - episode_.goal.x, pose_.y - episode_.goal.y);
}

EnvStep NavEnv::step(Action action) {
  if (done_) throw UsageError("step called on a finished episode");
  EnvStep out;
  const StepResult r = world::step(*grid_, pose_, action, spec_.motion);
  out.collided = r.collided;
  if (action == Action::kMoveForward && !r.collided) path_length_ += spec_.motion.forward_step;
  pose_ = r.pose;
  ++steps_;
  if (action == Action::kStop) {
    out.stopped = true;
    out.success = euclidean_to_goal() <= spec_.success_radius;
  }
  done_ = out.stopped || steps_ >= spec_.max_steps;
  out.done = done_;
  observation_ = render(*grid_, pose_, spec_.camera);
  return out;
}

Action OraclePilot::act(const NavEnv& env) const {
  return act(env.grid(), env.goal_field(), env.episode().goal, env.pose(), env.spec().motion);
}

Action OraclePilot::act(const OccupancyGrid& grid, const DistanceField& goal_field, const Pose& goal,
                        const Pose& pose, const MotionSpec& motion) const {
  if (std::hypot(pose.x - goal.x, pose.y - goal.y) <= stop_radius_) return Action::kStop;

  const auto path = goal_field.path_to_source(grid.cell_of(pose.x, pose.y));
  double wx = goal.x, wy = goal.y;
  if (path.size() > 1) {
    const std::size_t last = std::min<std::size_t>(path.size() - 1, static_cast<std::size_t>(lookahead_));
    std::tie(wx, wy) = grid.center_of(path[1]);
    for (std::size_t i = last; i >= 1; --i) {
      const auto [cx, cy] = grid.center_of(path[i]);
      if (segment_clear(grid, pose.x, pose.y, cx, cy, motion.clearance)) {
        wx = cx;
        wy = cy;
        break;
      }
    }
    if (path.size() - 1 <= static_cast<std::size_t>(lookahead_) &&
        segment_clear(grid, pose.x, pose.y, goal.x, goal.y, motion.clearance)) {
      wx = goal.x;
      wy = goal.y;
    }
  }

  // Headings reachable by whole turns; k counts left turns.
  const double turn = motion.turn_deg * std::numbers::pi / 180.0;
  const int n = std::max(1, static_cast<int>(std::lround(2.0 * std::numbers::pi / turn)));
  int best_k = -1;
  double best_cost = 0.0;
  for (int k = 0; k < n; ++k) {
    const double h = pose.theta + k * turn;
    const double nx = pose.x + motion.forward_step * std::cos(h);
    const double ny = pose.y + motion.forward_step * std::sin(h);
    if (!segment_clear(grid, pose.x, pose.y, nx, ny, motion.clearance)) continue;
    const double cost = std::hypot(wx - nx, wy - ny);
    if (best_k < 0 || cost < best_cost - 1e-9) {
      best_k = k;
      best_cost = cost;
    }
  }
  if (best_k < 0) return Action::kTurnLeft;
  if (best_k == 0) return Action::kMoveForward;
  return best_k <= n / 2 ? Action::kTurnLeft : Action::kTurnRight;
}

}  // namespace goalnav::world

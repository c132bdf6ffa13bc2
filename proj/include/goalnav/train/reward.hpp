#pragma once

#include <span>
#include <vector>

#include "goalnav/train/config.hpp"
#include "goalnav/world/geodesic.hpp"

namespace goalnav::train {

struct RewardTerms {
  double distance = 0.0;  // c_d * (d_geo(prev) - d_geo(pose))
  double angle = 0.0;     // c_a * heading closure, only within d_ang of the goal
  double success = 0.0;   // c_s on a successful STOP
  double slack = 0.0;     // -c_slack every step
  double total = 0.0;
};

/// Reward for the transition prev -> pose. `goal_field` is the distance
/// field rooted at the goal cell.
RewardTerms compute_reward(const world::Pose& prev, const world::Pose& pose, world::Action action,
                           const world::Episode& episode, const world::DistanceField& goal_field,
                           const RewardConfig& cfg);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r_t + gamma v_{t+1} (1 - done_t) - v_t with v_T = bootstrap;
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}; returns = A + v.
GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const char> dones,
              double bootstrap, double gamma, double lambda);

/// Shifts to mean 0 and scales to (population) std 1.
void normalize_advantages(std::vector<double>& adv);

}  // namespace goalnav::train

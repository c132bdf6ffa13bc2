#include "goalnav/train/reward.hpp"

#include <cmath>
#include <stdexcept>

namespace goalnav::train {

RewardTerms compute_reward(const world::Pose& prev, const world::Pose& pose, world::Action action,
                           const world::Episode& episode, const world::DistanceField& goal_field,
                           const RewardConfig& cfg) {
  RewardTerms r;
  const double d_prev = goal_field.at_point(prev.x, prev.y);
  const double d_now = goal_field.at_point(pose.x, pose.y);
  r.distance = cfg.c_d * (d_prev - d_now);
  if (d_now < cfg.d_ang) {
    const double before = std::abs(world::angle_diff(prev.theta, episode.goal.theta));
    const double after = std::abs(world::angle_diff(pose.theta, episode.goal.theta));
    r.angle = cfg.c_a * (before - after);
  }
  if (action == world::Action::kStop &&
      std::hypot(pose.x - episode.goal.x, pose.y - episode.goal.y) <= cfg.success_radius) {
    r.success = cfg.c_s;
  }
  r.slack = -cfg.c_slack;
  r.total = r.distance + r.angle + r.success + r.slack;
  return r;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const char> dones,
              double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw std::invalid_argument("gae: sequences differ in length");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0, next_value = bootstrap;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return out;
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  double mean = 0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double std = std::sqrt(var / static_cast<double>(adv.size()));
  for (double& a : adv) a = (a - mean) / (std + 1e-8);
}

}  // namespace goalnav::train

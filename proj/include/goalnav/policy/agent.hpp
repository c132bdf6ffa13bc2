#pragma once

#include <optional>
#include <random>
#include <vector>

#include "goalnav/policy/policy.hpp"
#include "goalnav/world/render.hpp"

namespace goalnav::policy {

/// Per-environment recurrent memory carried between steps.
struct AgentMemory {
  nn::Tensor hidden;  // layers x 1 x hidden
  int prev_action = kStartToken;
  std::optional<kp::Detections> goal_detections;
};

struct Decision {
  world::Action action = world::Action::kStop;
  double log_prob = 0.0;
  double value = 0.0;
  std::vector<float> logits;
  std::vector<float> keypoints;  // model input for SKIP, empty otherwise
};

AgentMemory fresh_memory(const NavModel<float>& model);

/// Keypoint input for one observation; caches goal detections in `memory`.
std::vector<float> keypoint_input(const NavModel<float>& model, const world::RGBImage& obs,
                                  const world::RGBImage& goal, AgentMemory& memory);

/// One no-grad policy step. Samples with `rng`, or acts greedily when it is
/// null. Advances the memory (hidden state and previous action).
Decision decide(const NavModel<float>& model, const world::RGBImage& obs, const world::RGBImage& goal,
                AgentMemory& memory, std::mt19937_64* rng, fusion::FusionTrace<float>* trace = nullptr);

/// Critic estimate for the current state without advancing the memory.
double value_estimate(const NavModel<float>& model, const world::RGBImage& obs, const world::RGBImage& goal,
                      const AgentMemory& memory);

}  // namespace goalnav::policy

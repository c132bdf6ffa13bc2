#include "goalnav/policy/agent.hpp"

namespace goalnav::policy {

AgentMemory fresh_memory(const NavModel<float>& model) {
  AgentMemory m;
  m.hidden = model.initial_state(1);
  return m;
}

std::vector<float> keypoint_input(const NavModel<float>& model, const world::RGBImage& obs,
                                  const world::RGBImage& goal, AgentMemory& memory) {
  const auto& enc = model.encoder();
  if (!enc.uses_keypoints()) return {};
  const auto& fc = enc.config();
  if (!memory.goal_detections) memory.goal_detections = kp::detect(goal, fc.skip_max_points);
  return fusion::keypoint_features(*memory.goal_detections, obs, fc.skip_k, fc.skip_max_points);
}

namespace {

PolicyOutput<float> run(const NavModel<float>& model, const world::RGBImage& obs, const world::RGBImage& goal,
                        const std::vector<float>& keypoints, const AgentMemory& memory,
                        fusion::FusionTrace<float>* trace) {
  nn::NoGradGuard no_grad;
  const auto o = nn::constant(fusion::images_to_tensor<float>({&obs}));
  const auto g = nn::constant(fusion::images_to_tensor<float>({&goal}));
  Var<float> k;
  if (!keypoints.empty()) k = nn::constant(nn::Tensor({1, keypoints.size()}, keypoints));
  const int prev[1] = {memory.prev_action};
  return model.forward(o, g, k, prev, nn::constant(memory.hidden), trace);
}

}  // namespace

Decision decide(const NavModel<float>& model, const world::RGBImage& obs, const world::RGBImage& goal,
                AgentMemory& memory, std::mt19937_64* rng, fusion::FusionTrace<float>* trace) {
  Decision d;
  d.keypoints = keypoint_input(model, obs, goal, memory);
  const auto out = run(model, obs, goal, d.keypoints, memory, trace);
  const auto logits = out.logits.value().data();
  d.logits.assign(logits.begin(), logits.end());
  std::mt19937_64 unused;
  const Sample s = sample_action(d.logits, rng ? *rng : unused, rng == nullptr);
  d.action = s.action;
  d.log_prob = s.log_prob;
  d.value = out.value.value()[0];
  memory.hidden = out.new_hidden.value();
  memory.prev_action = static_cast<int>(s.action);
  return d;
}

double value_estimate(const NavModel<float>& model, const world::RGBImage& obs, const world::RGBImage& goal,
                      const AgentMemory& memory) {
  AgentMemory copy = memory;
  const auto kp = keypoint_input(model, obs, goal, copy);
  return run(model, obs, goal, kp, copy, nullptr).value.value()[0];
}

}  // namespace goalnav::policy

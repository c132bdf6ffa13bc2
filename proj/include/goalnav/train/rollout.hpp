#pragma once

#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "goalnav/nn/checkpoint.hpp"
#include "goalnav/policy/agent.hpp"
#include "goalnav/train/config.hpp"
#include "goalnav/train/reward.hpp"
#include "goalnav/world/nav_env.hpp"

namespace goalnav::train {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Transition {
  int episode_id = 0;
  world::Pose pose;  // pose at which `obs` was rendered
  world::RGBImage obs;
  std::shared_ptr<const world::RGBImage> goal;
  std::vector<float> keypoints;  // SKIP input, empty otherwise
  int prev_action = policy::kStartToken;
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
  nn::Tensor hidden_in;  // layers x 1 x hidden
};

struct FinishedEpisode {
  int env = 0;
  int episode_id = 0;
  double reward = 0.0;
  int steps = 0;
  bool success = false;
};

/// T steps for each of N environments, stored env-major: at(e, t).
struct RolloutBuffer {
  int steps_per_env = 0;
  int num_envs = 0;
  std::vector<Transition> transitions;
  std::vector<double> bootstrap;  // critic value after the last step, per env
  std::vector<double> advantages;  // filled by compute_advantages
  std::vector<double> returns;
  std::vector<FinishedEpisode> finished;

  Transition& at(int env, int t) { return transitions[static_cast<std::size_t>(env) * steps_per_env + t]; }
  const Transition& at(int env, int t) const {
    return transitions[static_cast<std::size_t>(env) * steps_per_env + t];
  }
  std::size_t index(int env, int t) const { return static_cast<std::size_t>(env) * steps_per_env + t; }
};

/// Runs GAE per environment and normalizes the advantages over the buffer.
void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda, bool normalize = true);

/// Draws training episodes: a uniform world from the training seeds, a
/// uniform difficulty band, then sample_episode.
class EpisodeSource {
 public:
  EpisodeSource(WorldConfig cfg, std::shared_ptr<world::WorldCache> cache);
  world::Episode sample(std::mt19937_64& rng, int id) const;
  std::shared_ptr<const world::OccupancyGrid> world_of(const world::Episode& ep) const { return cache_->get(ep); }
  const WorldConfig& config() const { return cfg_; }

 private:
  WorldConfig cfg_;
  std::shared_ptr<world::WorldCache> cache_;
};

/// Chooses the action for env `e` at rollout step `t` in place of sampling.
using ScriptedPolicy = std::function<world::Action(int e, int t, const world::NavEnv& env)>;

/// N persistent environments. Each owns its episode and action RNG streams,
/// so buffers do not depend on how environments are spread over workers.
class RolloutCollector {
 public:
  RolloutCollector(std::shared_ptr<const EpisodeSource> source, RewardConfig reward, int num_envs,
                   std::uint64_t seed);

  /// Steps every environment `steps` times under a frozen model. Throws
  /// TrainingError naming the worker if any worker fails.
  RolloutBuffer collect(const policy::NavModel<float>& model, int steps, int num_workers,
                        const ScriptedPolicy& script = {});

  int num_envs() const { return static_cast<int>(slots_.size()); }
  const world::NavEnv& env(int e) const { return slots_.at(e).env; }
  const policy::AgentMemory& memory(int e) const { return slots_.at(e).memory; }

  /// Serializes environment, memory and RNG state. Hidden states go into
  /// `ckpt` as tensors named "<prefix><e>.hidden".
  nlohmann::json save_state(nn::Checkpoint& ckpt, const std::string& prefix = "env.") const;
  void load_state(const nlohmann::json& state, const nn::Checkpoint& ckpt, const std::string& prefix = "env.");

 private:
  struct Slot {
    world::NavEnv env;
    policy::AgentMemory memory;
    std::shared_ptr<const world::RGBImage> goal;
    std::mt19937_64 episode_rng;
    std::mt19937_64 action_rng;
    int episodes_started = 0;
    double episode_reward = 0.0;
    bool started = false;
  };

  void begin_episode(Slot& slot, int e, const policy::NavModel<float>& model);
  void run_env(int e, const policy::NavModel<float>& model, RolloutBuffer& buffer, const ScriptedPolicy& script,
               std::vector<FinishedEpisode>& finished);

  std::shared_ptr<const EpisodeSource> source_;
  RewardConfig reward_;
  std::vector<Slot> slots_;
};

}  // namespace goalnav::train

#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "goalnav/world/episode.hpp"
#include "goalnav/world/nav_env.hpp"

namespace goalnav::train {

struct RewardConfig {
  double c_d = 1.0;      // geodesic progress
  double c_a = 0.5;      // heading closure near the goal
  double c_s = 10.0;     // success bonus at STOP
  double c_slack = 0.01;
  double d_ang = 1.0;    // metres; heading term gate
  double success_radius = world::kSuccessRadius;
};

struct TrainConfig {
  long total_steps = 2'000'000;
  int rollout_length = 128;  // T
  int num_envs = 8;          // N
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 2;
  int minibatches = 2;
  double lr = 2.5e-4;
  bool lr_decay = true;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  double adam_eps = 1e-5;
  RewardConfig reward;
  std::uint64_t seed = 0;
  int probe_every = 10;       // updates; the final update always probes
  int checkpoint_every = 50;  // updates; the final update always saves
  int encoder_chunk = 32;     // images per encoder pass during updates
  // Operational settings, excluded from the config hash.
  int num_workers = 1;
  int stop_after_updates = 0;  // 0 = run to total_steps
};

/// Throws nn::ConfigurationError naming the offending field.
void validate(const TrainConfig& cfg);

struct WorldConfig {
  std::vector<std::uint64_t> train_world_seeds;
  double world_size_m = 10.0;
  double cell_size = 0.25;
  std::vector<world::DifficultyBand> bands = world::default_bands();
  world::EnvSpec env;
};

nlohmann::json to_json(const RewardConfig& c);
nlohmann::json to_json(const TrainConfig& c);
RewardConfig reward_from_json(const nlohmann::json& j, RewardConfig base = {});
TrainConfig train_from_json(const nlohmann::json& j, TrainConfig base = {});

}  // namespace goalnav::train

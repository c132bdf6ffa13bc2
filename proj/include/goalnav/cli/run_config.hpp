#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "goalnav/eval/evaluation.hpp"
#include "goalnav/train/trainer.hpp"

namespace goalnav::cli {

/// Everything one run needs, loaded from a single JSON file. Missing keys
/// take defaults; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  policy::ModelConfig model;
  train::TrainConfig train;

  // World and agent.
  double world_size_m = 10.0;
  double cell_size = 0.25;
  int resolution = 64;
  double hfov_deg = 90.0;
  int max_steps = 500;
  double success_radius = world::kSuccessRadius;
  world::MotionSpec motion;
  std::vector<world::DifficultyBand> bands = world::default_bands();
  std::vector<std::uint64_t> train_world_seeds;
  std::vector<std::uint64_t> heldout_world_seeds;

  // Episode sets.
  std::string train_episodes;    // optional; written by gen-episodes
  std::string heldout_episodes;  // evaluation set
  std::string probe_episodes;    // optional; otherwise probe_count from held-out worlds
  int probe_count = 20;

  // Evaluation.
  bool eval_greedy = true;
  std::uint64_t eval_seed = 0;
  int eval_workers = 1;
  bool count_collided_moves = false;

  world::CameraSpec camera() const { return {hfov_deg, resolution}; }
  world::EnvSpec env_spec() const;
  train::WorldConfig world_config() const;
};

/// 20 training worlds (0..19) and 10 disjoint held-out worlds (1000..1009).
RunConfig default_run_config();

/// Throws nn::ConfigurationError naming the offending field.
void validate(const RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);
/// Parses on top of the defaults. Throws nn::ConfigurationError naming the
/// field for unknown keys, wrong types or invalid enum values.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" overrides to a config JSON. Values parse as JSON,
/// falling back to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// 16 hex digits of FNV-1a over the canonical JSON, excluding settings that
/// do not change results (output_dir, worker counts, stop_after_updates).
std::string config_hash(const RunConfig& cfg);

/// Relative output directories resolve under $GOALNAV_OUTPUT_ROOT when set.
std::filesystem::path resolve_output(const std::string& dir);

}  // namespace goalnav::cli

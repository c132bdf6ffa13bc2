#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "goalnav/cli/run_config.hpp"

namespace goalnav::cli {

enum class Split { kTrain, kHeldout };
Split parse_split(const std::string& s);

/// Writes `count` episodes from the split's world seeds as JSONL.
std::vector<world::Episode> cmd_gen_episodes(const RunConfig& cfg, int count, Split split,
                                             const std::filesystem::path& out);

struct TrainOutcome {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  int updates = 0;
  long steps = 0;
};

/// Trains under cfg.output_dir. With `resume`, continues from the checkpoint
/// there; its config hash must match.
TrainOutcome cmd_train(const RunConfig& cfg, bool resume = false);

/// Evaluates a checkpoint on an episode file and writes a JSON report.
nlohmann::json cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& episodes,
                        const std::filesystem::path& report_out, int num_workers = 1);

enum class AblationAxis { kMechanism, kMidMapping, kMidDepth, kEarlyConcat, kModeling };
AblationAxis parse_axis(const std::string& s);

struct Variant {
  std::string name;
  RunConfig config;
};

/// The variants of one ablation axis applied to a base config.
std::vector<Variant> ablation_variants(const RunConfig& base, AblationAxis axis);

struct VariantResult {
  std::string name;
  std::vector<double> sr, spl;  // per seed
  std::string error;            // empty on success
  std::string config_hash;
};

/// Trains and evaluates every variant for each seed, then writes one CSV row
/// per variant. A failing variant is recorded and the sweep continues.
std::vector<VariantResult> cmd_ablate(const RunConfig& base, AblationAxis axis, int seeds, long budget,
                                      const std::filesystem::path& csv_out);

/// CAM panels for the given timesteps plus a top-down trajectory map.
std::vector<std::string> cmd_visualize(const std::filesystem::path& checkpoint,
                                       const std::filesystem::path& episodes, int episode_id,
                                       const std::vector<int>& timesteps, const std::filesystem::path& out_dir);

/// Goal/observation keypoint matches at the episode start, as an image.
std::string cmd_keypoints(const RunConfig& cfg, const std::filesystem::path& episodes, int episode_id,
                          const std::filesystem::path& out);

/// Rebuilds the run config stored in a checkpoint.
RunConfig config_from_checkpoint(const std::filesystem::path& checkpoint);

}  // namespace goalnav::cli

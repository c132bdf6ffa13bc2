#pragma once

#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "goalnav/train/ppo.hpp"

namespace goalnav::train {

struct UpdateRecord {
  long step = 0;     // environment steps consumed so far
  int updates = 0;   // updates completed, including this one
  double mean_episode_reward = std::numeric_limits<double>::quiet_NaN();  // episodes finished in this rollout
  double probe_sr = std::numeric_limits<double>::quiet_NaN();   // latest probe, NaN before the first
  double probe_spl = std::numeric_limits<double>::quiet_NaN();
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  bool aborted = false;
};

nlohmann::json to_json(const UpdateRecord& r);
UpdateRecord update_from_json(const nlohmann::json& j);

struct TrainerSetup {
  policy::ModelConfig model;
  TrainConfig train;
  WorldConfig world;
  std::vector<world::Episode> probe_episodes;  // greedy SR/SPL probe; may be empty
  std::filesystem::path output_dir;
  std::string config_hash;
  nlohmann::json extra_meta;  // stored verbatim in checkpoints under "run"
};

/// Alternates rollouts, GAE and PPO updates until total_steps environment
/// steps are consumed. The last rollout is shortened so the count is exact.
class Trainer {
 public:
  explicit Trainer(TrainerSetup setup, std::shared_ptr<world::WorldCache> cache = nullptr);

  /// Restores model, optimizer, environments and RNG streams. Throws
  /// TrainingError when the checkpoint's config hash differs.
  void resume(const std::filesystem::path& checkpoint);

  /// Runs until total_steps or train.stop_after_updates; returns the records
  /// of every update so far.
  const std::vector<UpdateRecord>& run();

  /// One rollout/GAE/PPO cycle. Returns false once total_steps is reached.
  bool step_update();

  void save_checkpoint(const std::filesystem::path& path) const;
  void write_metrics(const std::filesystem::path& path) const;

  policy::NavModel<float>& model() { return *model_; }
  const std::vector<UpdateRecord>& history() const { return history_; }
  const std::optional<PpoStats>& last_stats() const { return last_stats_; }
  long steps_done() const { return steps_done_; }
  int updates_done() const { return updates_done_; }
  int total_updates() const;
  const TrainerSetup& setup() const { return setup_; }

  std::filesystem::path checkpoint_path() const { return setup_.output_dir / "checkpoint.ckpt"; }
  std::filesystem::path metrics_path() const { return setup_.output_dir / "metrics.csv"; }

 private:
  void probe(UpdateRecord& rec);

  TrainerSetup setup_;
  std::shared_ptr<world::WorldCache> cache_;
  std::unique_ptr<policy::NavModel<float>> model_;
  std::unique_ptr<nn::Adam<float>> optimizer_;
  std::unique_ptr<RolloutCollector> collector_;
  std::mt19937_64 shuffle_rng_;
  long steps_done_ = 0;
  int updates_done_ = 0;
  double last_sr_ = std::numeric_limits<double>::quiet_NaN();
  double last_spl_ = std::numeric_limits<double>::quiet_NaN();
  std::vector<UpdateRecord> history_;
  std::optional<PpoStats> last_stats_;
};

/// Header of the metrics CSV.
inline constexpr const char* kMetricsHeader =
    "step,updates,mean_episode_reward,probe_sr,probe_spl,actor_loss,value_loss,entropy,config_hash";

}  // namespace goalnav::train

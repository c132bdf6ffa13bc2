#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "goalnav/policy/agent.hpp"
#include "goalnav/world/episode.hpp"
#include "goalnav/world/nav_env.hpp"

namespace goalnav::eval {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpisodeResult {
  int id = 0;
  std::string band;
  bool success = false;
  bool stopped = false;
  int steps = 0;
  double path_length = 0.0;      // metres actually travelled
  double shortest_length = 0.0;  // geodesic start -> goal
  double final_distance = 0.0;   // Euclidean, metres
  std::vector<world::Pose> trajectory;
};

/// Anything that picks actions for an episode.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset(const world::NavEnv& env) = 0;
  virtual world::Action act(const world::NavEnv& env) = 0;
};

/// Drives a NavModel; greedy unless an RNG seed is supplied.
class ModelController : public Controller {
 public:
  ModelController(const policy::NavModel<float>& model, bool greedy, std::uint64_t seed = 0)
      : model_(model), greedy_(greedy), rng_(seed) {}
  void reset(const world::NavEnv& env) override;
  world::Action act(const world::NavEnv& env) override;
  /// Trace of the most recent act() call.
  const fusion::FusionTrace<float>& last_trace() const { return trace_; }
  void set_tracing(bool on) { tracing_ = on; }

 private:
  const policy::NavModel<float>& model_;
  bool greedy_;
  std::mt19937_64 rng_;
  policy::AgentMemory memory_;
  bool tracing_ = false;
  fusion::FusionTrace<float> trace_;
};

class OracleController : public Controller {
 public:
  explicit OracleController(double stop_radius = 0.5) : pilot_(stop_radius) {}
  void reset(const world::NavEnv&) override {}
  world::Action act(const world::NavEnv& env) override { return pilot_.act(env); }

 private:
  world::OraclePilot pilot_;
};

struct RunOptions {
  int max_steps = 500;
  bool record_trajectory = false;
  /// Count blocked forward moves in the path length (they add 0 otherwise).
  bool count_collided_moves = false;
};

/// Resets to the episode start, loops act/step until STOP or the step cap.
/// Success requires STOP within the environment's success radius.
EpisodeResult run_episode(world::NavEnv& env, std::shared_ptr<const world::OccupancyGrid> grid,
                          const world::Episode& episode, Controller& controller, const RunOptions& opts = {});

/// Mean of S_i * l_i / max(p_i, l_i). Throws EvaluationError when empty or
/// when some l_i <= 0.
double spl(const std::vector<EpisodeResult>& results);
/// Throws EvaluationError when empty.
double success_rate(const std::vector<EpisodeResult>& results);

struct EvalOptions {
  bool greedy = true;
  std::uint64_t seed = 0;
  int num_workers = 1;
  RunOptions run;
  world::EnvSpec env;
};

/// Evaluates episodes independently (optionally across threads); results
/// keep the input order.
std::vector<EpisodeResult> evaluate(const policy::NavModel<float>& model, const std::vector<world::Episode>& episodes,
                                    world::WorldCache& cache, const EvalOptions& opts);

/// Per-episode results plus overall and per-band SR/SPL.
nlohmann::json make_report(const std::vector<EpisodeResult>& results, const std::string& config_hash,
                           const nlohmann::json& extra = {});

/// Writes one panel per timestep: observation, goal, pre-fusion CAM overlay
/// and post-fusion CAM overlay tiled horizontally. Throws UsageError when a
/// timestep lies beyond the greedy rollout.
std::vector<std::string> export_cam_panels(const policy::NavModel<float>& model, const world::Episode& episode,
                                           world::WorldCache& cache, const world::EnvSpec& env_spec,
                                           const std::vector<int>& timesteps, const std::string& out_dir,
                                           const std::string& config_hash, int max_steps = 500);

/// Top-down map: walls, free space, path polyline, start (green) and goal
/// (red). `scale` pixels per cell.
world::RGBImage trajectory_map(const world::OccupancyGrid& grid, const world::Episode& episode,
                               const std::vector<world::Pose>& path, int scale = 4);

}  // namespace goalnav::eval

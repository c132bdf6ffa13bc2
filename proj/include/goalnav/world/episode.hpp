#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "goalnav/world/agent.hpp"
#include "goalnav/world/grid.hpp"
#include "goalnav/world/render.hpp"

namespace goalnav::world {

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kSuccessRadius = 1.0;

struct DifficultyBand {
  std::string name;
  double min_d = 0.0;
  double max_d = 0.0;
};

/// easy [1.5, 3], medium [3, 5], hard [5, 8] metres.
std::vector<DifficultyBand> default_bands();

struct Episode {
  int id = 0;
  std::uint64_t world_seed = 0;
  double world_size_m = 10.0;
  double cell_size = 0.25;
  Pose start;
  Pose goal;
  RGBImage goal_image;
  double shortest_length = 0.0;  // geodesic start -> goal, metres
  std::string band;
};

/// Start and goal at free-cell centres with geodesic distance in
/// [min_d, max_d] and straight-line distance above the success radius.
/// Headings are uniform in [0, 2*pi). Throws SamplingError after bounded
/// rejection sampling and UsageError if min_d <= 1.0 or max_d <= min_d.
Episode sample_episode(const OccupancyGrid& grid, std::mt19937_64& rng, double min_d, double max_d,
                       const CameraSpec& camera = {});

/// Thread-safe memo of generated worlds keyed by (seed, size, cell size).
class WorldCache {
 public:
  std::shared_ptr<const OccupancyGrid> get(std::uint64_t seed, double size_m, double cell_size);
  std::shared_ptr<const OccupancyGrid> get(const Episode& ep) {
    return get(ep.world_seed, ep.world_size_m, ep.cell_size);
  }
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::tuple<std::uint64_t, double, double>, std::shared_ptr<const OccupancyGrid>> worlds_;
};

struct EpisodeSetSpec {
  std::vector<std::uint64_t> world_seeds;
  double world_size_m = 10.0;
  double cell_size = 0.25;
  int count = 100;
  std::vector<DifficultyBand> bands = default_bands();
  std::uint64_t seed = 0;
  CameraSpec camera;
};

/// Episodes cycle through the world seeds; bands are drawn uniformly. Each
/// episode uses its own RNG stream derived from (seed, index).
std::vector<Episode> generate_episodes(const EpisodeSetSpec& spec, WorldCache& cache);

nlohmann::json pose_to_json(const Pose& p);
Pose pose_from_json(const nlohmann::json& j);
/// Goal image excluded; re-render it after loading.
nlohmann::json episode_to_json(const Episode& ep);
Episode episode_from_json(const nlohmann::json& j);

/// One JSON object per line; goal images are not stored.
void write_episodes(const std::string& path, const std::vector<Episode>& episodes);
/// Reads a JSONL episode set and re-renders every goal image.
std::vector<Episode> read_episodes(const std::string& path, WorldCache& cache,
                                   const CameraSpec& camera = {});

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace goalnav::world

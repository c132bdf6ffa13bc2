#include "goalnav/world/episode.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "goalnav/world/geodesic.hpp"

namespace goalnav::world {

std::vector<DifficultyBand> default_bands() {
  return {{"easy", 1.5, 3.0}, {"medium", 3.0, 5.0}, {"hard", 5.0, 8.0}};
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Episode sample_episode(const OccupancyGrid& grid, std::mt19937_64& rng, double min_d, double max_d,
                       const CameraSpec& camera) {
  if (!(min_d > kSuccessRadius)) throw UsageError("min_d must exceed the 1.0 m success radius");
  if (!(max_d > min_d)) throw UsageError("max_d must exceed min_d");
  const auto cells = grid.free_cells();
  if (cells.empty()) throw SamplingError("grid has no free cells");

  std::uniform_int_distribution<std::size_t> pick_cell(0, cells.size() - 1);
  std::uniform_real_distribution<double> pick_heading(0.0, 2.0 * std::numbers::pi);
  constexpr int kMaxAttempts = 64;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Cell s = cells[pick_cell(rng)];
    const DistanceField field(grid, s);
    const auto [sx, sy] = grid.center_of(s);
    std::vector<Cell> candidates;
    for (const Cell& c : cells) {
      const double d = field.at(c);
      if (d < min_d || d > max_d) continue;
      const auto [gx, gy] = grid.center_of(c);
      if (std::hypot(gx - sx, gy - sy) <= kSuccessRadius) continue;
      candidates.push_back(c);
    }
    if (candidates.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick_goal(0, candidates.size() - 1);
    const Cell g = candidates[pick_goal(rng)];
    const auto [gx, gy] = grid.center_of(g);

    Episode ep;
    ep.world_seed = grid.seed();
    ep.world_size_m = grid.width() * grid.cell_size();
    ep.cell_size = grid.cell_size();
    ep.start = {sx, sy, pick_heading(rng)};
    ep.goal = {gx, gy, pick_heading(rng)};
    ep.shortest_length = field.at(g);
    ep.goal_image = render(grid, ep.goal, camera);
    return ep;
  }
  throw SamplingError("no start/goal pair with geodesic distance in [" + std::to_string(min_d) + ", " +
                      std::to_string(max_d) + "] after " + std::to_string(kMaxAttempts) +
                      " attempts (world seed " + std::to_string(grid.seed()) + ")");
}

std::shared_ptr<const OccupancyGrid> WorldCache::get(std::uint64_t seed, double size_m,
                                                     double cell_size) {
  const auto key = std::make_tuple(seed, size_m, cell_size);
  {
    std::lock_guard lock(mutex_);
    if (auto it = worlds_.find(key); it != worlds_.end()) return it->second;
  }
  auto grid = std::make_shared<const OccupancyGrid>(generate_world(seed, size_m, cell_size));
  std::lock_guard lock(mutex_);
  return worlds_.try_emplace(key, std::move(grid)).first->second;
}

std::size_t WorldCache::size() const {
  std::lock_guard lock(mutex_);
  return worlds_.size();
}

std::vector<Episode> generate_episodes(const EpisodeSetSpec& spec, WorldCache& cache) {
  if (spec.world_seeds.empty()) throw UsageError("episode set needs at least one world seed");
  if (spec.bands.empty()) throw UsageError("episode set needs at least one difficulty band");
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(std::max(spec.count, 0)));
  for (int i = 0; i < spec.count; ++i) {
    std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
    const auto world_seed = spec.world_seeds[static_cast<std::size_t>(i) % spec.world_seeds.size()];
    const auto grid = cache.get(world_seed, spec.world_size_m, spec.cell_size);
    std::uniform_int_distribution<std::size_t> pick_band(0, spec.bands.size() - 1);
    const DifficultyBand& band = spec.bands[pick_band(rng)];
    Episode ep = sample_episode(*grid, rng, band.min_d, band.max_d, spec.camera);
    ep.id = i;
    ep.world_size_m = spec.world_size_m;
    ep.band = band.name;
    out.push_back(std::move(ep));
  }
  return out;
}

nlohmann::json pose_to_json(const Pose& p) { return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }
Pose pose_from_json(const nlohmann::json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("theta").get<double>()};
}

nlohmann::json episode_to_json(const Episode& ep) {
  return {{"id", ep.id},
          {"world_seed", ep.world_seed},
          {"world_size_m", ep.world_size_m},
          {"cell_size", ep.cell_size},
          {"start", pose_to_json(ep.start)},
          {"goal", pose_to_json(ep.goal)},
          {"shortest_length", ep.shortest_length},
          {"band", ep.band}};
}

Episode episode_from_json(const nlohmann::json& j) {
  Episode ep;
  ep.id = j.at("id").get<int>();
  ep.world_seed = j.at("world_seed").get<std::uint64_t>();
  ep.world_size_m = j.value("world_size_m", 10.0);
  ep.cell_size = j.value("cell_size", 0.25);
  ep.start = pose_from_json(j.at("start"));
  ep.goal = pose_from_json(j.at("goal"));
  ep.shortest_length = j.at("shortest_length").get<double>();
  ep.band = j.value("band", std::string{});
  return ep;
}

void write_episodes(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open episode file for writing: " + path);
  for (const Episode& ep : episodes) out << episode_to_json(ep).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing episode file: " + path);
}

std::vector<Episode> read_episodes(const std::string& path, WorldCache& cache, const CameraSpec& camera) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open episode file: " + path);
  std::vector<Episode> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Episode ep;
    try {
      ep = episode_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ep.goal_image = render(*cache.get(ep), ep.goal, camera);
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace goalnav::world

#include "goalnav/eval/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <map>

#include "goalnav/fusion/eigencam.hpp"
#include "goalnav/io/ppm.hpp"

namespace goalnav::eval {

void ModelController::reset(const world::NavEnv&) { memory_ = policy::fresh_memory(model_); }

world::Action ModelController::act(const world::NavEnv& env) {
  const auto d = policy::decide(model_, env.observation(), env.goal_image(), memory_, greedy_ ? nullptr : &rng_,
                                tracing_ ? &trace_ : nullptr);
  return d.action;
}

EpisodeResult run_episode(world::NavEnv& env, std::shared_ptr<const world::OccupancyGrid> grid,
                          const world::Episode& episode, Controller& controller, const RunOptions& opts) {
  env.reset(std::move(grid), episode);
  controller.reset(env);
  EpisodeResult r;
  r.id = episode.id;
  r.band = episode.band;
  r.shortest_length = episode.shortest_length;
  if (opts.record_trajectory) r.trajectory.push_back(env.pose());
  double path = 0.0;
  while (!env.done() && r.steps < opts.max_steps) {
    const world::Action a = controller.act(env);
    const world::EnvStep s = env.step(a);
    ++r.steps;
    if (a == world::Action::kMoveForward && (!s.collided || opts.count_collided_moves)) {
      path += env.spec().motion.forward_step;
    }
    if (opts.record_trajectory) r.trajectory.push_back(env.pose());
    if (s.stopped) {
      r.stopped = true;
      r.success = s.success;
    }
  }
  r.path_length = path;
  r.final_distance = env.euclidean_to_goal();
  return r;
}

double success_rate(const std::vector<EpisodeResult>& results) {
  if (results.empty()) throw EvaluationError("success rate of an empty result set is undefined");
  double s = 0;
  for (const auto& r : results) s += r.success ? 1.0 : 0.0;
  return s / static_cast<double>(results.size());
}

double spl(const std::vector<EpisodeResult>& results) {
  if (results.empty()) throw EvaluationError("SPL of an empty result set is undefined");
  double s = 0;
  for (const auto& r : results) {
    if (!(r.shortest_length > 0.0)) throw EvaluationError("episode " + std::to_string(r.id) + " has l <= 0");
    if (r.success) s += r.shortest_length / std::max(r.path_length, r.shortest_length);
  }
  return s / static_cast<double>(results.size());
}

std::vector<EpisodeResult> evaluate(const policy::NavModel<float>& model, const std::vector<world::Episode>& episodes,
                                    world::WorldCache& cache, const EvalOptions& opts) {
  std::vector<EpisodeResult> results(episodes.size());
  const int workers = std::max(1, std::min<int>(opts.num_workers, static_cast<int>(episodes.size())));
  auto work = [&](int w) {
    world::NavEnv env(opts.env);
    for (std::size_t i = static_cast<std::size_t>(w); i < episodes.size(); i += static_cast<std::size_t>(workers)) {
      const auto& ep = episodes[i];
      ModelController ctl(model, opts.greedy, world::mix_seed(opts.seed, static_cast<std::uint64_t>(ep.id)));
      results[i] = run_episode(env, cache.get(ep), ep, ctl, opts.run);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::future<void>> futs;
    for (int w = 0; w < workers; ++w) futs.push_back(std::async(std::launch::async, work, w));
    for (auto& f : futs) f.get();
  }
  return results;
}

namespace {
nlohmann::json aggregate(const std::vector<EpisodeResult>& rs) {
  double p = 0, steps = 0;
  for (const auto& r : rs) {
    p += r.path_length;
    steps += r.steps;
  }
  return {{"episodes", rs.size()},
          {"success_rate", success_rate(rs)},
          {"spl", spl(rs)},
          {"mean_path_length", p / static_cast<double>(rs.size())},
          {"mean_steps", steps / static_cast<double>(rs.size())}};
}
}  // namespace

nlohmann::json make_report(const std::vector<EpisodeResult>& results, const std::string& config_hash,
                           const nlohmann::json& extra) {
  nlohmann::json per = nlohmann::json::array();
  std::map<std::string, std::vector<EpisodeResult>> bands;
  for (const auto& r : results) {
    per.push_back({{"id", r.id},
                   {"band", r.band},
                   {"success", r.success},
                   {"stopped", r.stopped},
                   {"steps", r.steps},
                   {"path_length", r.path_length},
                   {"shortest_length", r.shortest_length},
                   {"final_distance", r.final_distance}});
    bands[r.band].push_back(r);
  }
  nlohmann::json by_band = nlohmann::json::object();
  for (const auto& [name, rs] : bands) by_band[name] = aggregate(rs);
  nlohmann::json report = {{"config_hash", config_hash},
                           {"aggregate", aggregate(results)},
                           {"bands", by_band},
                           {"episodes", per}};
  if (!extra.is_null()) report["meta"] = extra;
  return report;
}

std::vector<std::string> export_cam_panels(const policy::NavModel<float>& model, const world::Episode& episode,
                                           world::WorldCache& cache, const world::EnvSpec& env_spec,
                                           const std::vector<int>& timesteps, const std::string& out_dir,
                                           const std::string& config_hash, int max_steps) {
  world::NavEnv env(env_spec);
  env.reset(cache.get(episode), episode);
  ModelController ctl(model, true);
  ctl.set_tracing(true);
  ctl.reset(env);

  struct Frame {
    world::RGBImage obs;
    fusion::FusionTrace<float> trace;
  };
  std::vector<Frame> frames;
  while (!env.done() && static_cast<int>(frames.size()) < max_steps) {
    const auto obs = env.observation();
    const auto a = ctl.act(env);
    frames.push_back({obs, ctl.last_trace()});
    env.step(a);
  }
  for (int t : timesteps) {
    if (t < 0 || t >= static_cast<int>(frames.size())) {
      throw world::UsageError("timestep " + std::to_string(t) + " out of range [0, " +
                              std::to_string(frames.size()) + ") for episode " + std::to_string(episode.id));
    }
  }
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  for (int t : timesteps) {
    const auto& f = frames[static_cast<std::size_t>(t)];
    const auto pre = fusion::eigencam(f.trace.pre_fusion);
    const auto post = fusion::eigencam(f.trace.post_fusion);
    const auto panel = io::tile_horizontal({f.obs, episode.goal_image, fusion::overlay_heatmap(f.obs, pre),
                                            fusion::overlay_heatmap(f.obs, post)});
    char name[64];
    std::snprintf(name, sizeof(name), "cam_ep%d_t%04d.ppm", episode.id, t);
    const auto path = (std::filesystem::path(out_dir) / name).string();
    io::write_ppm(path, panel, "config_hash " + config_hash);
    paths.push_back(path);
  }
  return paths;
}

world::RGBImage trajectory_map(const world::OccupancyGrid& grid, const world::Episode& episode,
                               const std::vector<world::Pose>& path, int scale) {
  const int s = std::max(1, scale);
  world::RGBImage img(grid.height() * s, grid.width() * s);
  for (int y = 0; y < grid.height(); ++y)
    for (int x = 0; x < grid.width(); ++x) {
      const float v = grid.occupied(x, y) ? 0.15f : 0.92f;
      for (int dy = 0; dy < s; ++dy)
        for (int dx = 0; dx < s; ++dx)
          for (int c = 0; c < 3; ++c) img.at(c, y * s + dy, x * s + dx) = v;
    }
  const double ppm = s / grid.cell_size();
  auto put = [&](double wx, double wy, std::array<float, 3> rgb, int radius) {
    const int cx = static_cast<int>(wx * ppm), cy = static_cast<int>(wy * ppm);
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        const int x = cx + dx, y = cy + dy;
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[static_cast<std::size_t>(c)];
      }
  };
  for (std::size_t i = 1; i < path.size(); ++i) {
    const auto& a = path[i - 1];
    const auto& b = path[i];
    const int n = static_cast<int>(std::ceil(std::hypot(b.x - a.x, b.y - a.y) * ppm)) + 1;
    for (int k = 0; k <= n; ++k) {
      const double t = static_cast<double>(k) / n;
      put(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), {0.15f, 0.35f, 0.95f}, 0);
    }
  }
  put(episode.start.x, episode.start.y, {0.1f, 0.8f, 0.1f}, std::max(1, s / 2));
  put(episode.goal.x, episode.goal.y, {0.9f, 0.1f, 0.1f}, std::max(1, s / 2));
  return img;
}

}  // namespace goalnav::eval

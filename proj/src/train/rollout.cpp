#include "goalnav/train/rollout.hpp"

#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

namespace goalnav::train {

void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda, bool normalize) {
  const int T = buffer.steps_per_env;
  buffer.advantages.assign(buffer.transitions.size(), 0.0);
  buffer.returns.assign(buffer.transitions.size(), 0.0);
  std::vector<double> r(T), v(T);
  std::vector<char> d(T);
  for (int e = 0; e < buffer.num_envs; ++e) {
    for (int t = 0; t < T; ++t) {
      const auto& tr = buffer.at(e, t);
      r[t] = tr.reward;
      v[t] = tr.value;
      d[t] = tr.done;
    }
    const auto g = gae(r, v, d, buffer.bootstrap.at(e), gamma, lambda);
    for (int t = 0; t < T; ++t) {
      buffer.advantages[buffer.index(e, t)] = g.advantages[t];
      buffer.returns[buffer.index(e, t)] = g.returns[t];
    }
  }
  if (normalize) normalize_advantages(buffer.advantages);
}

EpisodeSource::EpisodeSource(WorldConfig cfg, std::shared_ptr<world::WorldCache> cache)
    : cfg_(std::move(cfg)), cache_(std::move(cache)) {
  if (cfg_.train_world_seeds.empty()) throw nn::ConfigurationError("field 'world.train_world_seeds' is empty");
  if (cfg_.bands.empty()) throw nn::ConfigurationError("field 'world.bands' is empty");
  if (!cache_) cache_ = std::make_shared<world::WorldCache>();
}

world::Episode EpisodeSource::sample(std::mt19937_64& rng, int id) const {
  std::string last_error;
  for (int attempt = 0; attempt < 16; ++attempt) {
    std::uniform_int_distribution<std::size_t> pick_world(0, cfg_.train_world_seeds.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_band(0, cfg_.bands.size() - 1);
    const std::uint64_t seed = cfg_.train_world_seeds[pick_world(rng)];
    const auto& band = cfg_.bands[pick_band(rng)];
    const auto grid = cache_->get(seed, cfg_.world_size_m, cfg_.cell_size);
    try {
      world::Episode ep = world::sample_episode(*grid, rng, band.min_d, band.max_d, cfg_.env.camera);
      ep.id = id;
      ep.world_seed = seed;
      ep.world_size_m = cfg_.world_size_m;
      ep.cell_size = cfg_.cell_size;
      ep.band = band.name;
      return ep;
    } catch (const world::SamplingError& e) {
      last_error = e.what();
    }
  }
  throw world::SamplingError("no training episode could be sampled: " + last_error);
}

RolloutCollector::RolloutCollector(std::shared_ptr<const EpisodeSource> source, RewardConfig reward, int num_envs,
                                   std::uint64_t seed)
    : source_(std::move(source)), reward_(reward) {
  if (num_envs < 1) throw nn::ConfigurationError("field 'train.num_envs' must be positive");
  slots_.reserve(num_envs);
  for (int e = 0; e < num_envs; ++e) {
    Slot s{world::NavEnv(source_->config().env), {}, {}, {}, {}, 0, 0.0, false};
    s.episode_rng.seed(world::mix_seed(seed, 2 * static_cast<std::uint64_t>(e)));
    s.action_rng.seed(world::mix_seed(seed, 2 * static_cast<std::uint64_t>(e) + 1));
    slots_.push_back(std::move(s));
  }
}

void RolloutCollector::begin_episode(Slot& slot, int e, const policy::NavModel<float>& model) {
  const int id = slot.episodes_started * num_envs() + e;
  const world::Episode ep = source_->sample(slot.episode_rng, id);
  slot.env.reset(source_->world_of(ep), ep);
  slot.goal = std::make_shared<const world::RGBImage>(ep.goal_image);
  slot.memory = policy::fresh_memory(model);
  slot.episode_reward = 0.0;
  ++slot.episodes_started;
  slot.started = true;
}

namespace {

struct StepOutput {
  std::vector<float> logits;
  double value = 0.0;
  nn::Tensor new_hidden;
};

StepOutput forward_one(const policy::NavModel<float>& model, const world::RGBImage& obs,
                       const world::RGBImage& goal, const std::vector<float>& keypoints,
                       const policy::AgentMemory& memory) {
  nn::NoGradGuard no_grad;
  const auto o = nn::constant(fusion::images_to_tensor<float>({&obs}));
  const auto g = nn::constant(fusion::images_to_tensor<float>({&goal}));
  nn::Var<float> k;
  if (!keypoints.empty()) k = nn::constant(nn::Tensor({1, keypoints.size()}, keypoints));
  const int prev[1] = {memory.prev_action};
  const auto out = model.forward(o, g, k, prev, nn::constant(memory.hidden));
  StepOutput s;
  const auto l = out.logits.value().data();
  s.logits.assign(l.begin(), l.end());
  s.value = out.value.value()[0];
  s.new_hidden = out.new_hidden.value();
  return s;
}

}  // namespace

void RolloutCollector::run_env(int e, const policy::NavModel<float>& model, RolloutBuffer& buffer,
                               const ScriptedPolicy& script, std::vector<FinishedEpisode>& finished) {
  Slot& slot = slots_[e];
  if (!slot.started) begin_episode(slot, e, model);
  for (int t = 0; t < buffer.steps_per_env; ++t) {
    Transition& tr = buffer.at(e, t);
    tr.episode_id = slot.env.episode().id;
    tr.pose = slot.env.pose();
    tr.obs = slot.env.observation();
    tr.goal = slot.goal;
    tr.prev_action = slot.memory.prev_action;
    tr.hidden_in = slot.memory.hidden;
    tr.keypoints = policy::keypoint_input(model, tr.obs, *slot.goal, slot.memory);

    const StepOutput out = forward_one(model, tr.obs, *slot.goal, tr.keypoints, slot.memory);
    if (script) {
      tr.action = static_cast<int>(script(e, t, slot.env));
      tr.log_prob = policy::log_probs(out.logits).at(tr.action);
    } else {
      const auto s = policy::sample_action(out.logits, slot.action_rng);
      tr.action = static_cast<int>(s.action);
      tr.log_prob = s.log_prob;
    }
    tr.value = out.value;

    const world::Pose prev = slot.env.pose();
    const auto action = static_cast<world::Action>(tr.action);
    const world::EnvStep step = slot.env.step(action);
    const RewardTerms r =
        compute_reward(prev, slot.env.pose(), action, slot.env.episode(), slot.env.goal_field(), reward_);
    tr.reward = r.total;
    tr.done = step.done;
    if (!std::isfinite(tr.reward)) throw nn::NumericalError("non-finite reward");
    slot.episode_reward += r.total;
    slot.memory.hidden = out.new_hidden;
    slot.memory.prev_action = tr.action;

    if (step.done) {
      finished.push_back({e, slot.env.episode().id, slot.episode_reward, slot.env.steps(), step.success});
      begin_episode(slot, e, model);
    }
  }
  buffer.bootstrap[e] = policy::value_estimate(model, slot.env.observation(), *slot.goal, slot.memory);
}

RolloutBuffer RolloutCollector::collect(const policy::NavModel<float>& model, int steps, int num_workers,
                                        const ScriptedPolicy& script) {
  if (steps < 1) throw nn::ConfigurationError("rollout length must be positive");
  RolloutBuffer buffer;
  buffer.steps_per_env = steps;
  buffer.num_envs = num_envs();
  buffer.transitions.resize(static_cast<std::size_t>(steps) * num_envs());
  buffer.bootstrap.assign(num_envs(), 0.0);

  const int workers = std::max(1, std::min(num_workers, num_envs()));
  std::vector<std::vector<FinishedEpisode>> finished(num_envs());
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](int w) {
    try {
      for (int e = w; e < num_envs(); e += workers) run_env(e, model, buffer, script, finished[e]);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& th : threads) th.join();
  }
  for (int w = 0; w < workers; ++w) {
    if (!errors[w]) continue;
    try {
      std::rethrow_exception(errors[w]);
    } catch (const std::exception& ex) {
      throw TrainingError("rollout worker " + std::to_string(w) + " failed: " + ex.what());
    }
  }
  for (auto& f : finished) buffer.finished.insert(buffer.finished.end(), f.begin(), f.end());
  return buffer;
}

namespace {
std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}
void set_rng_state(std::mt19937_64& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw nn::ConfigurationError("corrupt RNG state in checkpoint");
}
}  // namespace

nlohmann::json RolloutCollector::save_state(nn::Checkpoint& ckpt, const std::string& prefix) const {
  nlohmann::json out = nlohmann::json::array();
  for (int e = 0; e < num_envs(); ++e) {
    const Slot& s = slots_[e];
    nlohmann::json j = {{"episode_rng", rng_state(s.episode_rng)},
                        {"action_rng", rng_state(s.action_rng)},
                        {"episodes_started", s.episodes_started},
                        {"episode_reward", s.episode_reward},
                        {"started", s.started}};
    if (s.started) {
      j["episode"] = world::episode_to_json(s.env.episode());
      j["pose"] = world::pose_to_json(s.env.pose());
      j["steps"] = s.env.steps();
      j["path_length"] = s.env.path_length();
      j["prev_action"] = s.memory.prev_action;
      ckpt.add(prefix + std::to_string(e) + ".hidden", s.memory.hidden);
    }
    out.push_back(std::move(j));
  }
  return out;
}

void RolloutCollector::load_state(const nlohmann::json& state, const nn::Checkpoint& ckpt,
                                  const std::string& prefix) {
  if (!state.is_array() || static_cast<int>(state.size()) != num_envs())
    throw nn::ConfigurationError("checkpoint holds a different number of environments");
  for (int e = 0; e < num_envs(); ++e) {
    const auto& j = state[e];
    Slot& s = slots_[e];
    set_rng_state(s.episode_rng, j.at("episode_rng").get<std::string>());
    set_rng_state(s.action_rng, j.at("action_rng").get<std::string>());
    s.episodes_started = j.at("episodes_started").get<int>();
    s.episode_reward = j.at("episode_reward").get<double>();
    s.started = j.at("started").get<bool>();
    if (!s.started) continue;
    world::Episode ep = world::episode_from_json(j.at("episode"));
    const auto grid = source_->world_of(ep);
    ep.goal_image = world::render(*grid, ep.goal, source_->config().env.camera);
    s.env.restore(grid, ep, world::pose_from_json(j.at("pose")), j.at("steps").get<int>(),
                  j.at("path_length").get<double>());
    s.goal = std::make_shared<const world::RGBImage>(ep.goal_image);
    s.memory = policy::AgentMemory{};
    s.memory.hidden = ckpt.at(prefix + std::to_string(e) + ".hidden");
    s.memory.prev_action = j.at("prev_action").get<int>();
  }
}

}  // namespace goalnav::train

#include "goalnav/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "goalnav/eval/evaluation.hpp"

namespace goalnav::train {

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
double number_or_nan(const nlohmann::json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

nlohmann::json to_json(const UpdateRecord& r) {
  return {{"step", r.step},
          {"updates", r.updates},
          {"mean_episode_reward", number_or_null(r.mean_episode_reward)},
          {"probe_sr", number_or_null(r.probe_sr)},
          {"probe_spl", number_or_null(r.probe_spl)},
          {"actor_loss", number_or_null(r.actor_loss)},
          {"value_loss", number_or_null(r.value_loss)},
          {"entropy", number_or_null(r.entropy)},
          {"aborted", r.aborted}};
}

UpdateRecord update_from_json(const nlohmann::json& j) {
  UpdateRecord r;
  r.step = j.at("step").get<long>();
  r.updates = j.at("updates").get<int>();
  r.mean_episode_reward = number_or_nan(j.at("mean_episode_reward"));
  r.probe_sr = number_or_nan(j.at("probe_sr"));
  r.probe_spl = number_or_nan(j.at("probe_spl"));
  r.actor_loss = number_or_nan(j.at("actor_loss"));
  r.value_loss = number_or_nan(j.at("value_loss"));
  r.entropy = number_or_nan(j.at("entropy"));
  r.aborted = j.value("aborted", false);
  return r;
}

Trainer::Trainer(TrainerSetup setup, std::shared_ptr<world::WorldCache> cache)
    : setup_(std::move(setup)), cache_(cache ? std::move(cache) : std::make_shared<world::WorldCache>()) {
  validate(setup_.train);
  const auto& tc = setup_.train;
  model_ = std::make_unique<policy::NavModel<float>>(setup_.model, world::mix_seed(tc.seed, 0));
  optimizer_ = std::make_unique<nn::Adam<float>>(model_->params(), nn::Adam<float>::Options{0.9, 0.999, tc.adam_eps});
  auto source = std::make_shared<const EpisodeSource>(setup_.world, cache_);
  collector_ = std::make_unique<RolloutCollector>(source, tc.reward, tc.num_envs, world::mix_seed(tc.seed, 1));
  shuffle_rng_.seed(world::mix_seed(tc.seed, 2));
}

int Trainer::total_updates() const {
  const long per = static_cast<long>(setup_.train.rollout_length) * setup_.train.num_envs;
  return static_cast<int>((setup_.train.total_steps + per - 1) / per);
}

void Trainer::probe(UpdateRecord& rec) {
  if (!setup_.probe_episodes.empty()) {
    eval::EvalOptions opts;
    opts.greedy = true;
    opts.num_workers = setup_.train.num_workers;
    opts.env = setup_.world.env;
    opts.run.max_steps = setup_.world.env.max_steps;
    const auto results = eval::evaluate(*model_, setup_.probe_episodes, *cache_, opts);
    last_sr_ = eval::success_rate(results);
    last_spl_ = eval::spl(results);
  }
  rec.probe_sr = last_sr_;
  rec.probe_spl = last_spl_;
}

bool Trainer::step_update() {
  const auto& tc = setup_.train;
  const long remaining = tc.total_steps - steps_done_;
  if (remaining <= 0) return false;
  const long per = static_cast<long>(tc.rollout_length) * tc.num_envs;
  const int T = static_cast<int>(std::min(per, remaining) / tc.num_envs);

  RolloutBuffer buffer = collector_->collect(*model_, T, tc.num_workers);
  compute_advantages(buffer, tc.gamma, tc.gae_lambda);
  const double frac = tc.lr_decay ? 1.0 - static_cast<double>(updates_done_) / total_updates() : 1.0;
  last_stats_ = ppo_update(buffer, *model_, *optimizer_, tc, tc.lr * frac, shuffle_rng_);

  steps_done_ += static_cast<long>(T) * tc.num_envs;
  ++updates_done_;

  UpdateRecord rec;
  rec.step = steps_done_;
  rec.updates = updates_done_;
  if (!buffer.finished.empty()) {
    double sum = 0;
    for (const auto& f : buffer.finished) sum += f.reward;
    rec.mean_episode_reward = sum / static_cast<double>(buffer.finished.size());
  }
  rec.actor_loss = last_stats_->actor_loss;
  rec.value_loss = last_stats_->value_loss;
  rec.entropy = last_stats_->entropy;
  rec.aborted = last_stats_->aborted;
  const bool last = steps_done_ >= tc.total_steps;
  if (last || updates_done_ % tc.probe_every == 0) {
    probe(rec);
  } else {
    rec.probe_sr = last_sr_;
    rec.probe_spl = last_spl_;
  }
  history_.push_back(rec);
  return true;
}

const std::vector<UpdateRecord>& Trainer::run() {
  const auto& tc = setup_.train;
  std::filesystem::create_directories(setup_.output_dir);
  while (steps_done_ < tc.total_steps) {
    if (tc.stop_after_updates > 0 && updates_done_ >= tc.stop_after_updates) break;
    step_update();
    write_metrics(metrics_path());
    const bool finished = steps_done_ >= tc.total_steps;
    const bool stopping = tc.stop_after_updates > 0 && updates_done_ >= tc.stop_after_updates;
    if (finished || stopping || updates_done_ % tc.checkpoint_every == 0) save_checkpoint(checkpoint_path());
  }
  return history_;
}

void Trainer::write_metrics(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw TrainingError("cannot write metrics file " + tmp);
    out << kMetricsHeader << '\n';
    for (const auto& r : history_) {
      out << r.step << ',' << r.updates << ',' << csv_number(r.mean_episode_reward) << ','
          << csv_number(r.probe_sr) << ',' << csv_number(r.probe_spl) << ',' << csv_number(r.actor_loss) << ','
          << csv_number(r.value_loss) << ',' << csv_number(r.entropy) << ',' << setup_.config_hash << '\n';
    }
    if (!out) throw TrainingError("failed writing metrics file " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  nn::Checkpoint ckpt;
  ckpt.config_hash = setup_.config_hash;
  nn::add_parameters(ckpt, model_->params(), "model.");
  const auto& items = model_->params().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    ckpt.add("adam.m." + items[i].name, optimizer_->first_moments()[i]);
    ckpt.add("adam.v." + items[i].name, optimizer_->second_moments()[i]);
  }
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : history_) history.push_back(to_json(r));
  ckpt.meta = {{"model", policy::to_json(setup_.model)},
               {"train", to_json(setup_.train)},
               {"steps_done", steps_done_},
               {"updates_done", updates_done_},
               {"adam_steps", optimizer_->steps_taken()},
               {"shuffle_rng", rng_state(shuffle_rng_)},
               {"last_probe_sr", number_or_null(last_sr_)},
               {"last_probe_spl", number_or_null(last_spl_)},
               {"history", history}};
  ckpt.meta["envs"] = collector_->save_state(ckpt);
  if (!setup_.extra_meta.is_null()) ckpt.meta["run"] = setup_.extra_meta;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  nn::write_checkpoint(tmp, ckpt);
  std::filesystem::rename(tmp, path);
}

void Trainer::resume(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw TrainingError("checkpoint not found: " + path.string());
  const nn::Checkpoint ckpt = nn::read_checkpoint(path);
  if (ckpt.config_hash != setup_.config_hash) {
    throw TrainingError("config hash mismatch on resume: checkpoint " + ckpt.config_hash + ", run " +
                        setup_.config_hash);
  }
  const auto& meta = ckpt.meta;
  if (meta.at("model") != policy::to_json(setup_.model))
    throw TrainingError("checkpoint model configuration differs from the run configuration");
  nn::load_parameters(ckpt, model_->params(), "model.");
  std::vector<nn::Tensor> m, v;
  for (const auto& p : model_->params().items()) {
    m.push_back(ckpt.at("adam.m." + p.name));
    v.push_back(ckpt.at("adam.v." + p.name));
  }
  optimizer_->restore(std::move(m), std::move(v), meta.at("adam_steps").get<std::size_t>());
  steps_done_ = meta.at("steps_done").get<long>();
  updates_done_ = meta.at("updates_done").get<int>();
  std::istringstream is(meta.at("shuffle_rng").get<std::string>());
  is >> shuffle_rng_;
  if (!is) throw TrainingError("corrupt RNG state in checkpoint");
  last_sr_ = number_or_nan(meta.at("last_probe_sr"));
  last_spl_ = number_or_nan(meta.at("last_probe_spl"));
  history_.clear();
  for (const auto& r : meta.at("history")) history_.push_back(update_from_json(r));
  collector_->load_state(meta.at("envs"), ckpt);
}

}  // namespace goalnav::train

#include "goalnav/train/config.hpp"

#include "goalnav/nn/tensor.hpp"

namespace goalnav::train {

using nn::ConfigurationError;

void validate(const TrainConfig& c) {
  auto positive = [](bool ok, const char* field) {
    if (!ok) throw ConfigurationError(std::string("field 'train.") + field + "' must be positive");
  };
  positive(c.total_steps > 0, "total_steps");
  positive(c.rollout_length > 0, "rollout_length");
  positive(c.num_envs > 0, "num_envs");
  positive(c.gamma > 0 && c.gamma <= 1, "gamma");
  positive(c.gae_lambda >= 0 && c.gae_lambda <= 1, "gae_lambda");
  if (!(c.clip_eps > 0 && c.clip_eps < 1)) throw ConfigurationError("field 'train.clip_eps' must lie in (0, 1)");
  positive(c.epochs > 0, "epochs");
  positive(c.minibatches > 0, "minibatches");
  positive(c.lr > 0, "lr");
  positive(c.value_coef > 0, "value_coef");
  positive(c.entropy_coef >= 0, "entropy_coef");
  positive(c.max_grad_norm > 0, "max_grad_norm");
  positive(c.adam_eps > 0, "adam_eps");
  positive(c.probe_every > 0, "probe_every");
  positive(c.checkpoint_every > 0, "checkpoint_every");
  positive(c.encoder_chunk > 0, "encoder_chunk");
  positive(c.num_workers > 0, "num_workers");
  if (c.stop_after_updates < 0) throw ConfigurationError("field 'train.stop_after_updates' must be >= 0");
  if (c.minibatches > c.num_envs)
    throw ConfigurationError("field 'train.minibatches' cannot exceed train.num_envs (minibatches split environments)");
  if (c.total_steps % c.num_envs != 0)
    throw ConfigurationError("field 'train.total_steps' must be a multiple of train.num_envs");
  positive(c.reward.success_radius > 0, "reward.success_radius");
  positive(c.reward.d_ang >= 0, "reward.d_ang");
}

nlohmann::json to_json(const RewardConfig& c) {
  return {{"c_d", c.c_d}, {"c_a", c.c_a}, {"c_s", c.c_s}, {"c_slack", c.c_slack}, {"d_ang", c.d_ang},
          {"success_radius", c.success_radius}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"total_steps", c.total_steps},   {"rollout_length", c.rollout_length},
          {"num_envs", c.num_envs},         {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},     {"clip_eps", c.clip_eps},
          {"epochs", c.epochs},             {"minibatches", c.minibatches},
          {"lr", c.lr},                     {"lr_decay", c.lr_decay},
          {"value_coef", c.value_coef},     {"entropy_coef", c.entropy_coef},
          {"max_grad_norm", c.max_grad_norm}, {"adam_eps", c.adam_eps},
          {"reward", to_json(c.reward)},    {"seed", c.seed},
          {"probe_every", c.probe_every},   {"checkpoint_every", c.checkpoint_every},
          {"encoder_chunk", c.encoder_chunk}, {"num_workers", c.num_workers},
          {"stop_after_updates", c.stop_after_updates}};
}

namespace {
template <typename V>
void read(const nlohmann::json& j, const char* key, V& out, const std::string& scope) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  const bool ok = std::is_same_v<V, bool> ? v.is_boolean()
                  : std::is_floating_point_v<V> ? v.is_number()
                                                : v.is_number_integer();
  if (!ok) throw ConfigurationError("field '" + scope + key + "' has the wrong type");
  out = v.get<V>();
}
}  // namespace

RewardConfig reward_from_json(const nlohmann::json& j, RewardConfig c) {
  const std::string s = "train.reward.";
  read(j, "c_d", c.c_d, s);
  read(j, "c_a", c.c_a, s);
  read(j, "c_s", c.c_s, s);
  read(j, "c_slack", c.c_slack, s);
  read(j, "d_ang", c.d_ang, s);
  read(j, "success_radius", c.success_radius, s);
  return c;
}

TrainConfig train_from_json(const nlohmann::json& j, TrainConfig c) {
  const std::string s = "train.";
  read(j, "total_steps", c.total_steps, s);
  read(j, "rollout_length", c.rollout_length, s);
  read(j, "num_envs", c.num_envs, s);
  read(j, "gamma", c.gamma, s);
  read(j, "gae_lambda", c.gae_lambda, s);
  read(j, "clip_eps", c.clip_eps, s);
  read(j, "epochs", c.epochs, s);
  read(j, "minibatches", c.minibatches, s);
  read(j, "lr", c.lr, s);
  read(j, "lr_decay", c.lr_decay, s);
  read(j, "value_coef", c.value_coef, s);
  read(j, "entropy_coef", c.entropy_coef, s);
  read(j, "max_grad_norm", c.max_grad_norm, s);
  read(j, "adam_eps", c.adam_eps, s);
  read(j, "seed", c.seed, s);
  read(j, "probe_every", c.probe_every, s);
  read(j, "checkpoint_every", c.checkpoint_every, s);
  read(j, "encoder_chunk", c.encoder_chunk, s);
  read(j, "num_workers", c.num_workers, s);
  read(j, "stop_after_updates", c.stop_after_updates, s);
  if (j.contains("reward")) c.reward = reward_from_json(j.at("reward"), c.reward);
  return c;
}

}  // namespace goalnav::train

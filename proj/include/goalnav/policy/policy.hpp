#pragma once

#include <memory>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "goalnav/fusion/encoder.hpp"
#include "goalnav/nn/layers.hpp"
#include "goalnav/world/agent.hpp"

namespace goalnav::policy {

using nn::BasicTensor;
using nn::ParameterSet;
using nn::Var;

/// Index used for "no previous action" at the first step of an episode.
inline constexpr int kStartToken = world::kNumActions;

struct PolicyConfig {
  int hidden_size = 512;
  int action_embed = 32;
  int num_layers = 1;
};

void validate(const PolicyConfig& cfg);
nlohmann::json to_json(const PolicyConfig& cfg);
PolicyConfig policy_from_json(const nlohmann::json& j, PolicyConfig base = {});

template <typename T>
struct PolicyOutput {
  Var<T> logits;      // N x 4
  Var<T> value;       // N
  Var<T> state;       // N x hidden (s_t, top layer)
  Var<T> new_hidden;  // layers x N x hidden
};

/// GRU actor-critic over z_fusion ++ embed(a_{t-1}); one trunk, linear
/// actor and critic heads.
template <typename T>
class RecurrentActorCritic {
 public:
  RecurrentActorCritic(ParameterSet<T>& params, int input_dim, const PolicyConfig& cfg, nn::Rng& rng,
                       const std::string& prefix = "policy");

  /// prev_actions holds action codes or kStartToken; hidden is
  /// layers x N x hidden. Throws NumericalError on non-finite z.
  PolicyOutput<T> act(const Var<T>& z, std::span<const int> prev_actions, const Var<T>& hidden) const;

  BasicTensor<T> initial_state(std::size_t batch) const;
  const PolicyConfig& config() const { return cfg_; }
  int input_dim() const { return input_dim_; }

  const nn::Linear<T>& actor_head() const { return actor_; }
  const nn::Linear<T>& critic_head() const { return critic_; }
  const Var<T>& action_table() const { return embed_; }

 private:
  PolicyConfig cfg_;
  int input_dim_ = 0;
  Var<T> embed_;
  std::vector<nn::GruCell<T>> cells_;
  nn::Linear<T> actor_, critic_;
};

struct Sample {
  world::Action action = world::Action::kStop;
  double log_prob = 0.0;
};

/// Row-wise log-softmax in double precision.
std::vector<double> log_probs(std::span<const float> logits);
/// Categorical draw from softmax(logits), or argmax (first maximum) if greedy.
Sample sample_action(std::span<const float> logits, std::mt19937_64& rng, bool greedy = false);
/// Entropy of softmax(logits) in nats.
double entropy(std::span<const float> logits);

struct ModelConfig {
  fusion::FusionConfig fusion;
  PolicyConfig policy;
};

/// {"fusion": ..., "policy": ...}
nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_from_json(const nlohmann::json& j);

/// Encoder plus policy sharing one parameter registry.
template <typename T>
class NavModel {
 public:
  NavModel(const ModelConfig& cfg, std::uint64_t seed);
  NavModel(const NavModel&) = delete;
  NavModel& operator=(const NavModel&) = delete;

  /// obs, goal: N x 3 x H x W; keypoints: N x 4k for SKIP (ignored otherwise).
  PolicyOutput<T> forward(const Var<T>& obs, const Var<T>& goal, const Var<T>& keypoints,
                          std::span<const int> prev_actions, const Var<T>& hidden,
                          fusion::FusionTrace<T>* trace = nullptr) const;

  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const fusion::FusionEncoder<T>& encoder() const { return *encoder_; }
  const RecurrentActorCritic<T>& policy() const { return *policy_; }
  const ModelConfig& config() const { return cfg_; }
  BasicTensor<T> initial_state(std::size_t batch) const { return policy_->initial_state(batch); }

 private:
  ModelConfig cfg_;
  ParameterSet<T> params_;
  std::unique_ptr<fusion::FusionEncoder<T>> encoder_;
  std::unique_ptr<RecurrentActorCritic<T>> policy_;
};

}  // namespace goalnav::policy

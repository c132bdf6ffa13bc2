#include "goalnav/policy/policy.hpp"

#include <algorithm>
#include <cmath>

namespace goalnav::policy {

using nn::ConfigurationError;
using nn::NumericalError;

void validate(const PolicyConfig& cfg) {
  if (cfg.hidden_size <= 0) throw ConfigurationError("policy.hidden_size must be positive");
  if (cfg.action_embed <= 0) throw ConfigurationError("policy.action_embed must be positive");
  if (cfg.num_layers <= 0) throw ConfigurationError("policy.num_layers must be positive");
}

nlohmann::json to_json(const PolicyConfig& cfg) {
  return {{"hidden_size", cfg.hidden_size}, {"action_embed", cfg.action_embed}, {"num_layers", cfg.num_layers}};
}

PolicyConfig policy_from_json(const nlohmann::json& j, PolicyConfig cfg) {
  auto num = [&](const char* key, int& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_integer()) throw ConfigurationError(std::string("field 'policy.") + key + "' must be an integer");
    out = j.at(key).get<int>();
  };
  num("hidden_size", cfg.hidden_size);
  num("action_embed", cfg.action_embed);
  num("num_layers", cfg.num_layers);
  return cfg;
}

template <typename T>
RecurrentActorCritic<T>::RecurrentActorCritic(ParameterSet<T>& params, int input_dim, const PolicyConfig& cfg,
                                              nn::Rng& rng, const std::string& prefix)
    : cfg_(cfg), input_dim_(input_dim) {
  validate(cfg);
  const auto h = static_cast<std::size_t>(cfg.hidden_size), a = static_cast<std::size_t>(cfg.action_embed);
  BasicTensor<T> table({static_cast<std::size_t>(kStartToken + 1), a});
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : table.data()) v = static_cast<T>(g(rng));
  embed_ = params.add(prefix + ".action_embed", std::move(table));
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::size_t in = l == 0 ? static_cast<std::size_t>(input_dim) + a : h;
    cells_.emplace_back(params, prefix + ".gru" + std::to_string(l), in, h, rng);
  }
  actor_ = nn::Linear<T>(params, prefix + ".actor", h, world::kNumActions, nn::LinearInit::kOrthogonal, rng, 0.01);
  critic_ = nn::Linear<T>(params, prefix + ".critic", h, 1, nn::LinearInit::kOrthogonal, rng, 1.0);
}

template <typename T>
BasicTensor<T> RecurrentActorCritic<T>::initial_state(std::size_t batch) const {
  return BasicTensor<T>({static_cast<std::size_t>(cfg_.num_layers), batch, static_cast<std::size_t>(cfg_.hidden_size)});
}

template <typename T>
PolicyOutput<T> RecurrentActorCritic<T>::act(const Var<T>& z, std::span<const int> prev_actions,
                                             const Var<T>& hidden) const {
  const std::size_t n = z.dim(0);
  const auto h = static_cast<std::size_t>(cfg_.hidden_size);
  const auto layers = static_cast<std::size_t>(cfg_.num_layers);
  if (z.shape() != nn::Shape{n, static_cast<std::size_t>(input_dim_)})
    throw ConfigurationError("policy input must be N x " + std::to_string(input_dim_) + ", got " + nn::shape_string(z.shape()));
  if (hidden.shape() != nn::Shape{layers, n, h})
    throw ConfigurationError("policy state must be " + nn::shape_string({layers, n, h}) + ", got " +
                             nn::shape_string(hidden.shape()));
  if (prev_actions.size() != n) throw ConfigurationError("policy: one previous action per batch row required");
  for (int a : prev_actions)
    if (a < 0 || a > kStartToken) throw ConfigurationError("policy: previous action code out of range");
  for (T v : z.value().data())
    if (!std::isfinite(static_cast<double>(v))) throw NumericalError("policy: non-finite fusion embedding");

  Var<T> x = nn::concat_cols<T>({z, nn::embedding(embed_, prev_actions)});
  std::vector<Var<T>> next;
  for (std::size_t l = 0; l < layers; ++l) {
    const Var<T> h_prev = nn::reshape(nn::slice_rows(hidden, l, 1), {n, h});
    x = nn::recurrent_step(h_prev, x, cells_[l]);
    next.push_back(nn::reshape(x, {1, n, h}));
  }
  PolicyOutput<T> out;
  out.state = x;
  out.new_hidden = layers == 1 ? next.front() : nn::concat_rows(next);
  out.logits = actor_(x);
  out.value = nn::reshape(critic_(x), {n});
  return out;
}

template class RecurrentActorCritic<float>;
template class RecurrentActorCritic<double>;

std::vector<double> log_probs(std::span<const float> logits) {
  if (logits.empty()) throw ConfigurationError("log_probs: empty logits");
  double m = -INFINITY;
  for (float v : logits) {
    if (!std::isfinite(v)) throw NumericalError("non-finite logits");
    m = std::max(m, static_cast<double>(v));
  }
  double s = 0;
  for (float v : logits) s += std::exp(v - m);
  const double lse = m + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

Sample sample_action(std::span<const float> logits, std::mt19937_64& rng, bool greedy) {
  if (logits.size() != static_cast<std::size_t>(world::kNumActions))
    throw ConfigurationError("sample_action expects one logit per action");
  const auto lp = log_probs(logits);
  int idx = 0;
  if (greedy) {
    idx = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  } else {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0;
    idx = static_cast<int>(lp.size()) - 1;
    for (std::size_t i = 0; i < lp.size(); ++i) {
      acc += std::exp(lp[i]);
      if (u < acc) {
        idx = static_cast<int>(i);
        break;
      }
    }
  }
  return {*world::action_from_index(idx), lp[static_cast<std::size_t>(idx)]};
}

double entropy(std::span<const float> logits) {
  double h = 0;
  for (double l : log_probs(logits)) h -= std::exp(l) * l;
  return h;
}

template <typename T>
NavModel<T>::NavModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  nn::Rng rng(seed);
  encoder_ = std::make_unique<fusion::FusionEncoder<T>>(params_, cfg.fusion, rng);
  policy_ = std::make_unique<RecurrentActorCritic<T>>(params_, encoder_->embed_dim(), cfg.policy, rng);
}

template <typename T>
PolicyOutput<T> NavModel<T>::forward(const Var<T>& obs, const Var<T>& goal, const Var<T>& keypoints,
                                     std::span<const int> prev_actions, const Var<T>& hidden,
                                     fusion::FusionTrace<T>* trace) const {
  const Var<T> z = encoder_->forward(obs, goal, keypoints, trace);
  return policy_->act(z, prev_actions, hidden);
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"fusion", fusion::to_json(cfg.fusion)}, {"policy", to_json(cfg.policy)}};
}

ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("fusion")) cfg.fusion = fusion::fusion_from_json(j.at("fusion"));
  if (j.contains("policy")) cfg.policy = policy_from_json(j.at("policy"));
  return cfg;
}

template class NavModel<float>;
template class NavModel<double>;

}  // namespace goalnav::policy

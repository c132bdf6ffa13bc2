#include "goalnav/train/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "goalnav/nn/ops.hpp"

namespace goalnav::train {

using nn::Var;

template <typename T>
PpoLosses<T> ppo_losses(const Var<T>& logits, const Var<T>& values, std::span<const int> actions,
                        std::span<const double> old_log_probs, std::span<const double> advantages,
                        std::span<const double> returns, double clip_eps, double value_coef, double entropy_coef) {
  const std::size_t n = logits.dim(0);
  if (actions.size() != n || old_log_probs.size() != n || advantages.size() != n || returns.size() != n ||
      values.size() != n) {
    throw nn::ConfigurationError("ppo_losses: batch sizes disagree");
  }
  auto column = [n](std::span<const double> v) {
    nn::BasicTensor<T> t({n});
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<T>(v[i]);
    return nn::constant(std::move(t));
  };
  const auto logp_all = nn::log_softmax(logits);
  const auto logp = nn::pick(logp_all, actions);
  const auto ratio = nn::exp(nn::sub(logp, column(old_log_probs)));
  const auto adv = column(advantages);
  const auto unclipped = nn::mul(ratio, adv);
  const auto clipped = nn::mul(nn::clamp(ratio, static_cast<T>(1 - clip_eps), static_cast<T>(1 + clip_eps)), adv);

  PpoLosses<T> out;
  out.actor = nn::scale(nn::mean(nn::minimum(unclipped, clipped)), T(-1));
  out.value = nn::mean(nn::square(nn::sub(nn::reshape(values, {n}), column(returns))));
  out.entropy = nn::scale(nn::sum(nn::mul(nn::exp(logp_all), logp_all)), static_cast<T>(-1.0 / n));
  out.total = nn::sub(nn::add(out.actor, nn::scale(out.value, static_cast<T>(value_coef))),
                      nn::scale(out.entropy, static_cast<T>(entropy_coef)));
  return out;
}

template PpoLosses<float> ppo_losses(const Var<float>&, const Var<float>&, std::span<const int>,
                                     std::span<const double>, std::span<const double>, std::span<const double>,
                                     double, double, double);
template PpoLosses<double> ppo_losses(const Var<double>&, const Var<double>&, std::span<const int>,
                                      std::span<const double>, std::span<const double>, std::span<const double>,
                                      double, double, double);

namespace {

struct Snapshot {
  std::vector<nn::Tensor> params;
  std::vector<nn::Tensor> m, v;
  std::size_t steps = 0;
};

Snapshot take_snapshot(const nn::ParameterSet<float>& params, const nn::Adam<float>& opt) {
  Snapshot s;
  for (const auto& p : params.items()) s.params.push_back(p.var.value());
  s.m = opt.first_moments();
  s.v = opt.second_moments();
  s.steps = opt.steps_taken();
  return s;
}

void restore_snapshot(const Snapshot& s, nn::ParameterSet<float>& params, nn::Adam<float>& opt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto var = params.items()[i].var;
    var.mutable_value() = s.params[i];
    var.zero_grad();
  }
  opt.restore(s.m, s.v, s.steps);
}

// Rows are time-major within a minibatch: row = t * B + b.
struct Minibatch {
  const RolloutBuffer* buffer;
  std::vector<int> envs;
  int T() const { return buffer->steps_per_env; }
  int B() const { return static_cast<int>(envs.size()); }
  const Transition& row(int r) const { return buffer->at(envs[r % B()], r / B()); }
};

Var<float> encode_rows(const policy::NavModel<float>& model, const Minibatch& mb, int start, int count) {
  std::vector<const world::RGBImage*> obs, goal;
  std::vector<float> kp;
  for (int r = start; r < start + count; ++r) {
    const Transition& tr = mb.row(r);
    obs.push_back(&tr.obs);
    goal.push_back(tr.goal.get());
    kp.insert(kp.end(), tr.keypoints.begin(), tr.keypoints.end());
  }
  Var<float> k;
  if (model.encoder().uses_keypoints()) {
    k = nn::constant(nn::Tensor({static_cast<std::size_t>(count), kp.size() / count}, kp));
  }
  return model.encoder().forward(nn::constant(fusion::images_to_tensor<float>(obs)),
                                 nn::constant(fusion::images_to_tensor<float>(goal)), k);
}

struct MinibatchResult {
  double actor = 0, value = 0, entropy = 0;
};

MinibatchResult minibatch_gradients(const Minibatch& mb, policy::NavModel<float>& model, const TrainConfig& cfg) {
  const int T = mb.T(), B = mb.B(), rows = T * B;
  const int chunk = cfg.encoder_chunk;
  const std::size_t D = model.encoder().embed_dim();

  nn::Tensor z({static_cast<std::size_t>(rows), D});
  {
    nn::NoGradGuard no_grad;
    for (int s = 0; s < rows; s += chunk) {
      const int c = std::min(chunk, rows - s);
      const auto zc = encode_rows(model, mb, s, c);
      std::copy(zc.value().data().begin(), zc.value().data().end(), z.raw() + static_cast<std::size_t>(s) * D);
    }
  }

  Var<float> z_leaf(z, true);
  const auto& pol = model.policy();
  const std::size_t layers = pol.config().num_layers, H = pol.config().hidden_size;
  nn::Tensor h0({layers, static_cast<std::size_t>(B), H});
  for (int b = 0; b < B; ++b) {
    const auto& hin = mb.row(b).hidden_in;
    for (std::size_t l = 0; l < layers; ++l)
      std::copy_n(hin.raw() + l * H, H, h0.raw() + (l * B + b) * H);
  }
  Var<float> hidden = nn::constant(h0);
  Var<float> total;
  MinibatchResult res;
  std::vector<int> prev(B), actions(B);
  std::vector<double> old_lp(B), adv(B), ret(B);
  for (int t = 0; t < T; ++t) {
    for (int b = 0; b < B; ++b) {
      const int e = mb.envs[b];
      const Transition& tr = mb.buffer->at(e, t);
      prev[b] = tr.prev_action;
      actions[b] = tr.action;
      old_lp[b] = tr.log_prob;
      adv[b] = mb.buffer->advantages[mb.buffer->index(e, t)];
      ret[b] = mb.buffer->returns[mb.buffer->index(e, t)];
    }
    const auto out = pol.act(nn::slice_rows(z_leaf, static_cast<std::size_t>(t) * B, B), prev, hidden);
    const auto l = ppo_losses<float>(out.logits, out.value, actions, old_lp, adv, ret, cfg.clip_eps,
                                     cfg.value_coef, cfg.entropy_coef);
    res.actor += l.actor.item();
    res.value += l.value.item();
    res.entropy += l.entropy.item();
    total = total.defined() ? nn::add(total, l.total) : l.total;

    hidden = out.new_hidden;
    bool any_done = false;
    nn::Tensor mask({layers, static_cast<std::size_t>(B), H}, 1.0f);
    for (int b = 0; b < B; ++b) {
      if (!mb.buffer->at(mb.envs[b], t).done) continue;
      any_done = true;
      for (std::size_t l2 = 0; l2 < layers; ++l2) std::fill_n(mask.raw() + (l2 * B + b) * H, H, 0.0f);
    }
    if (any_done) hidden = nn::mul(hidden, nn::constant(mask));
  }
  res.actor /= T;
  res.value /= T;
  res.entropy /= T;
  const auto loss = nn::scale(total, 1.0f / static_cast<float>(T));
  if (!std::isfinite(loss.item())) throw nn::NumericalError("non-finite PPO loss");
  nn::backward(loss);

  const nn::Tensor dz = z_leaf.grad();
  for (int s = 0; s < rows; s += chunk) {
    const int c = std::min(chunk, rows - s);
    const auto zc = encode_rows(model, mb, s, c);
    nn::Tensor g({static_cast<std::size_t>(c), D});
    std::copy_n(dz.raw() + static_cast<std::size_t>(s) * D, static_cast<std::size_t>(c) * D, g.raw());
    nn::backward(nn::sum(nn::mul(zc, nn::constant(std::move(g)))));
  }
  return res;
}

}  // namespace

PpoStats ppo_update(const RolloutBuffer& buffer, policy::NavModel<float>& model, nn::Adam<float>& optimizer,
                    const TrainConfig& cfg, double lr, std::mt19937_64& rng) {
  if (buffer.advantages.size() != buffer.transitions.size())
    throw nn::ConfigurationError("ppo_update: advantages have not been computed");
  auto& params = model.params();
  const Snapshot snapshot = take_snapshot(params, optimizer);
  const int groups = std::min(cfg.minibatches, buffer.num_envs);

  PpoStats stats;
  try {
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::vector<int> order(buffer.num_envs);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (int g = 0; g < groups; ++g) {
        Minibatch mb{&buffer, {}};
        for (int i = g; i < buffer.num_envs; i += groups) mb.envs.push_back(order[i]);
        params.zero_grad();
        const MinibatchResult r = minibatch_gradients(mb, model, cfg);
        if (!nn::grads_finite(params)) throw nn::NumericalError("non-finite gradient");
        const double norm = nn::clip_grad_norm(params, cfg.max_grad_norm);
        if (!std::isfinite(norm)) throw nn::NumericalError("non-finite gradient norm");
        optimizer.step(lr);
        stats.actor_loss += r.actor;
        stats.value_loss += r.value;
        stats.entropy += r.entropy;
        stats.grad_norm += norm;
        ++stats.minibatch_steps;
      }
    }
  } catch (const nn::NumericalError& e) {
    restore_snapshot(snapshot, params, optimizer);
    PpoStats aborted;
    aborted.aborted = true;
    aborted.abort_reason = e.what();
    aborted.actor_loss = aborted.value_loss = aborted.entropy = aborted.grad_norm = std::nan("");
    return aborted;
  }
  params.zero_grad();
  const double n = std::max(1, stats.minibatch_steps);
  stats.actor_loss /= n;
  stats.value_loss /= n;
  stats.entropy /= n;
  stats.grad_norm /= n;
  return stats;
}

}  // namespace goalnav::train

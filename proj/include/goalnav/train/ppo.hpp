#pragma once

#include <random>
#include <span>

#include "goalnav/nn/optim.hpp"
#include "goalnav/train/rollout.hpp"

namespace goalnav::train {

template <typename T>
struct PpoLosses {
  nn::Var<T> actor;    // -mean(min(r A, clip(r) A))
  nn::Var<T> value;    // mean((v - R)^2)
  nn::Var<T> entropy;  // mean policy entropy
  nn::Var<T> total;    // actor + value_coef value - entropy_coef entropy
};

/// Clipped-surrogate losses for one batch of N decisions. logits: N x 4,
/// values: N.
template <typename T>
PpoLosses<T> ppo_losses(const nn::Var<T>& logits, const nn::Var<T>& values, std::span<const int> actions,
                        std::span<const double> old_log_probs, std::span<const double> advantages,
                        std::span<const double> returns, double clip_eps, double value_coef, double entropy_coef);

struct PpoStats {
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;  // before clipping, averaged over minibatches
  int minibatch_steps = 0;
  bool aborted = false;
  std::string abort_reason;
};

/// Epochs x minibatches of clipped-surrogate updates. Minibatches are whole
/// environment sequences so the recurrent state replays from hidden_in.
/// The encoder runs without a tape first; its gradient is then recovered
/// chunk by chunk from the gradient w.r.t. its output. On a non-finite loss
/// or gradient the parameters and optimizer state are restored and the
/// update is reported as aborted.
PpoStats ppo_update(const RolloutBuffer& buffer, policy::NavModel<float>& model, nn::Adam<float>& optimizer,
                    const TrainConfig& cfg, double lr, std::mt19937_64& rng);

}  // namespace goalnav::train

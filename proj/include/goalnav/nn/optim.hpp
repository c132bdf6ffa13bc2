#pragma once

#include <vector>

#include "goalnav/nn/parameters.hpp"

namespace goalnav::nn {

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm);

/// True when every parameter gradient is finite.
template <typename T>
bool grads_finite(const ParameterSet<T>& params);

template <typename T>
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-5;
  };

  explicit Adam(ParameterSet<T>& params, Options options = {});

  void step(double lr);

  std::size_t steps_taken() const { return steps_; }
  const std::vector<BasicTensor<T>>& first_moments() const { return m_; }
  const std::vector<BasicTensor<T>>& second_moments() const { return v_; }
  /// Restores moments and the step counter from a checkpoint.
  void restore(std::vector<BasicTensor<T>> m, std::vector<BasicTensor<T>> v, std::size_t steps);

 private:
  ParameterSet<T>* params_;
  Options options_;
  std::vector<BasicTensor<T>> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace goalnav::nn

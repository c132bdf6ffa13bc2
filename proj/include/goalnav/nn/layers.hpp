#pragma once

#include <string>

#include "goalnav/nn/ops.hpp"
#include "goalnav/nn/parameters.hpp"

namespace goalnav::nn {

template <typename T>
struct Conv2d {
  Var<T> weight, bias;
  int stride = 1, padding = 0;

  Conv2d() = default;
  Conv2d(ParameterSet<T>& params, const std::string& name, std::size_t in_ch,
         std::size_t out_ch, std::size_t kernel, int stride_, int padding_, Rng& rng)
      : stride(stride_), padding(padding_) {
    weight = params.add(name + ".weight",
                        kaiming_uniform<T>({out_ch, in_ch, kernel, kernel},
                                           in_ch * kernel * kernel, rng));
    bias = params.add(name + ".bias", BasicTensor<T>({out_ch}));
  }
  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, stride, padding); }
};

template <typename T>
struct GroupNorm {
  Var<T> gamma, beta;
  int groups = 8;

  GroupNorm() = default;
  GroupNorm(ParameterSet<T>& params, const std::string& name, std::size_t channels,
            int groups_)
      : groups(groups_) {
    gamma = params.add(name + ".gamma", BasicTensor<T>({channels}, T(1)));
    beta = params.add(name + ".beta", BasicTensor<T>({channels}));
  }
  Var<T> operator()(const Var<T>& x) const { return group_norm(x, gamma, beta, groups); }
};

enum class LinearInit { kKaiming, kOrthogonal, kZero };

template <typename T>
struct Linear {
  Var<T> weight, bias;

  Linear() = default;
  Linear(ParameterSet<T>& params, const std::string& name, std::size_t in,
         std::size_t out, LinearInit init, Rng& rng, double gain = 1.0) {
    BasicTensor<T> w;
    switch (init) {
      case LinearInit::kKaiming: w = kaiming_uniform<T>({out, in}, in, rng); break;
      case LinearInit::kOrthogonal: w = orthogonal<T>(out, in, gain, rng); break;
      case LinearInit::kZero: w = BasicTensor<T>({out, in}); break;
    }
    weight = params.add(name + ".weight", std::move(w));
    bias = params.add(name + ".bias", BasicTensor<T>({out}));
  }
  Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }
};

/// Two-gate gated recurrent cell:
///   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
///   u = sigmoid(W_iu x + b_iu + W_hu h + b_hu)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - u) * n + u * h
template <typename T>
struct GruCell {
  Linear<T> ir, iu, in, hr, hu, hn;
  std::size_t input_size = 0, hidden_size = 0;

  GruCell() = default;
  GruCell(ParameterSet<T>& params, const std::string& name, std::size_t input,
          std::size_t hidden, Rng& rng)
      : input_size(input), hidden_size(hidden) {
    ir = Linear<T>(params, name + ".ir", input, hidden, LinearInit::kOrthogonal, rng);
    iu = Linear<T>(params, name + ".iu", input, hidden, LinearInit::kOrthogonal, rng);
    in = Linear<T>(params, name + ".in", input, hidden, LinearInit::kOrthogonal, rng);
    hr = Linear<T>(params, name + ".hr", hidden, hidden, LinearInit::kOrthogonal, rng);
    hu = Linear<T>(params, name + ".hu", hidden, hidden, LinearInit::kOrthogonal, rng);
    hn = Linear<T>(params, name + ".hn", hidden, hidden, LinearInit::kOrthogonal, rng);
  }

  /// h_prev: N x hidden, x: N x input.
  Var<T> operator()(const Var<T>& h_prev, const Var<T>& x) const;
};

/// One recurrent step; throws NumericalError on non-finite inputs.
template <typename T>
Var<T> recurrent_step(const Var<T>& h_prev, const Var<T>& x, const GruCell<T>& cell) {
  return cell(h_prev, x);
}

}  // namespace goalnav::nn

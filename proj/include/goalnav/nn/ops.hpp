#pragma once

#include <span>
#include <vector>

#include "goalnav/nn/autograd.hpp"

// Differentiable operations. Image tensors are N x C x H x W; rank-3 C x H x W
// inputs are accepted wherever a single image makes sense and keep rank 3.
namespace goalnav::nn {

template <typename T>
Var<T> constant(BasicTensor<T> value) {
  return Var<T>(std::move(value), false);
}

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, T offset);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);
/// Elementwise clamp; gradient is zero where the bound is active.
template <typename T> Var<T> clamp(const Var<T>& a, T lo, T hi);
/// Elementwise minimum; the gradient goes to the smaller operand (ties: a).
template <typename T> Var<T> minimum(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);

/// y = x W^T + b with x: N x D_in, W: D_out x D_in, b: D_out (may be undefined).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// 2-D cross-correlation. weight: C_out x C_in x k x k, bias: C_out (may be
/// undefined). Output spatial size floor((H + 2p - k) / s) + 1.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              int stride, int padding);

/// Convolution over a short depth axis. input: N x D x C x H x W,
/// weight: C_out x C x KD x k x k. Output is depth-major: N x D' x C_out x H' x W'
/// with D' = D + 2 * depth_padding - KD + 1.
template <typename T>
Var<T> conv3d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              int stride, int padding, int depth_padding);

/// Group normalization over N x C x ... with per-channel affine parameters.
template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  int groups, T eps = T(1e-5));

/// gamma * z + beta. gamma/beta either match z (N x C x H x W) or are
/// per-channel (N x C) and broadcast over H x W.
template <typename T>
Var<T> film_affine(const Var<T>& z, const Var<T>& gamma, const Var<T>& beta);

/// N x C x H x W -> N x C.
template <typename T> Var<T> global_avg_pool(const Var<T>& x);

/// Concatenate 2-D tensors along columns.
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
/// Concatenate along axis 0; trailing dimensions must agree.
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
/// Rows [start, start + count) along axis 0.
template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t start, std::size_t count);
/// N x D x ... -> N x ... summing over axis 1.
template <typename T> Var<T> sum_axis1(const Var<T>& a);

/// Row lookup: table V x E, indices in [0, V) -> N x E.
template <typename T>
Var<T> embedding(const Var<T>& table, std::span<const int> indices);

/// Row-wise log-softmax of an N x K tensor.
template <typename T> Var<T> log_softmax(const Var<T>& logits);
/// out[n] = a[n, indices[n]] for an N x K tensor.
template <typename T>
Var<T> pick(const Var<T>& a, std::span<const int> indices);

}  // namespace goalnav::nn

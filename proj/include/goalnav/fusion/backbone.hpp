#pragma once

#include <string>
#include <vector>

#include "goalnav/fusion/config.hpp"
#include "goalnav/nn/layers.hpp"

namespace goalnav::fusion {

using nn::BasicTensor;
using nn::ParameterSet;
using nn::Rng;
using nn::Shape;
using nn::Var;

template <typename T>
struct FilmFactors {
  Var<T> gamma, beta;  // N x C x H x W (FG_HR) or N x C (SEMANTIC)
};

/// Activation at the FiLM site of one block, before and after modulation.
template <typename T>
struct BlockTrace {
  BasicTensor<T> pre_film, post_film;
};

/// conv3x3(s) -> GN -> ReLU -> conv3x3 -> GN -> [FiLM] -> + shortcut -> ReLU.
/// The shortcut is a strided 1x1 conv + GN when the shape changes.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterSet<T>& params, const std::string& name, int in_ch, int out_ch, int stride,
                int groups, Rng& rng);

  Var<T> operator()(const Var<T>& x, const FilmFactors<T>* film = nullptr,
                    FilmPlacement placement = FilmPlacement::kBeforeResidual,
                    BlockTrace<T>* trace = nullptr) const;

 private:
  nn::Conv2d<T> conv1_, conv2_, proj_;
  nn::GroupNorm<T> gn1_, gn2_, proj_gn_;
  bool has_proj_ = false;
};

/// Stem + residual blocks + flatten/FC head, following a BackboneSpec.
/// With `stem3d` the input is N x 2 x C x H x W and the stem is a 3-D
/// convolution over the pair whose depth slices are summed afterwards.
template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(ParameterSet<T>& params, const std::string& name, const BackboneSpec& spec, int in_channels,
           int height, int width, Rng& rng, bool stem3d = false, int num_blocks = -1, bool with_head = true);

  Var<T> stem(const Var<T>& x) const;
  Var<T> block(int i, const Var<T>& x, const FilmFactors<T>* film = nullptr,
               FilmPlacement placement = FilmPlacement::kBeforeResidual, BlockTrace<T>* trace = nullptr) const;
  /// N x (C*H*W) -> N x embed_dim, ReLU.
  Var<T> head(const Var<T>& x) const;
  /// Full unconditioned pass; optionally records every block output.
  Var<T> forward(const Var<T>& x, std::vector<Var<T>>* block_outputs = nullptr) const;

  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  /// C x H x W after block i.
  Shape block_shape(int i) const { return block_shapes_.at(static_cast<std::size_t>(i)); }
  int embed_dim() const { return embed_dim_; }
  bool has_head() const { return has_head_; }
  /// Registry name of the first stem weight.
  const std::string& stem_weight_name() const { return stem_weight_name_; }

 private:
  bool stem3d_ = false;
  Var<T> stem_w_, stem_b_;
  nn::GroupNorm<T> stem_gn_;
  int stem_stride_ = 2, stem_pad_ = 2;
  std::vector<ResidualBlock<T>> blocks_;
  std::vector<Shape> block_shapes_;
  nn::Linear<T> head_;
  bool has_head_ = true;
  int embed_dim_ = 0;
  std::string stem_weight_name_;
};

/// Goal activation -> FiLM factors. FG_HR uses two 1x1 convolutions and
/// keeps the full C x H x W resolution; SEMANTIC average-pools and uses two
/// fully connected maps to per-channel factors. Weights start at zero with
/// gamma bias 1 and beta bias 0, so the initial transform is the identity.
template <typename T>
class FilmMapping {
 public:
  FilmMapping() = default;
  FilmMapping(ParameterSet<T>& params, const std::string& name, int channels, MidMapping mode);

  FilmFactors<T> operator()(const Var<T>& z_goal) const;
  MidMapping mode() const { return mode_; }

 private:
  MidMapping mode_ = MidMapping::kFgHr;
  Var<T> wg_, bg_, wb_, bb_;
};

int conv_out(int in, int kernel, int stride, int pad);

}  // namespace goalnav::fusion

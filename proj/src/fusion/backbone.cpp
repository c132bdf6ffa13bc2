#include "goalnav/fusion/backbone.hpp"

namespace goalnav::fusion {

using nn::ConfigurationError;

int conv_out(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

template <typename T>
ResidualBlock<T>::ResidualBlock(ParameterSet<T>& params, const std::string& name, int in_ch, int out_ch,
                                int stride, int groups, Rng& rng) {
  const auto i = static_cast<std::size_t>(in_ch), o = static_cast<std::size_t>(out_ch);
  conv1_ = nn::Conv2d<T>(params, name + ".conv1", i, o, 3, stride, 1, rng);
  gn1_ = nn::GroupNorm<T>(params, name + ".gn1", o, groups);
  conv2_ = nn::Conv2d<T>(params, name + ".conv2", o, o, 3, 1, 1, rng);
  gn2_ = nn::GroupNorm<T>(params, name + ".gn2", o, groups);
  has_proj_ = stride != 1 || in_ch != out_ch;
  if (has_proj_) {
    proj_ = nn::Conv2d<T>(params, name + ".proj", i, o, 1, stride, 0, rng);
    proj_gn_ = nn::GroupNorm<T>(params, name + ".proj_gn", o, groups);
  }
}

template <typename T>
Var<T> ResidualBlock<T>::operator()(const Var<T>& x, const FilmFactors<T>* film, FilmPlacement placement,
                                    BlockTrace<T>* trace) const {
  Var<T> h = nn::relu(gn1_(conv1_(x)));
  h = gn2_(conv2_(h));
  auto modulate = [&](const Var<T>& z) {
    if (!film) return z;
    Var<T> out = nn::film_affine(z, film->gamma, film->beta);
    if (trace) {
      trace->pre_film = z.value();
      trace->post_film = out.value();
    }
    return out;
  };
  if (placement == FilmPlacement::kBeforeResidual) h = modulate(h);
  const Var<T> skip = has_proj_ ? proj_gn_(proj_(x)) : x;
  Var<T> out = nn::relu(nn::add(h, skip));
  if (placement == FilmPlacement::kAfterBlock) out = modulate(out);
  if (trace && !film) trace->pre_film = trace->post_film = out.value();
  return out;
}

template <typename T>
Backbone<T>::Backbone(ParameterSet<T>& params, const std::string& name, const BackboneSpec& spec,
                      int in_channels, int height, int width, Rng& rng, bool stem3d, int num_blocks,
                      bool with_head)
    : stem3d_(stem3d), has_head_(with_head), embed_dim_(spec.embed_dim) {
  const int n_blocks = num_blocks < 0 ? static_cast<int>(spec.blocks.size()) : num_blocks;
  if (n_blocks > static_cast<int>(spec.blocks.size())) throw ConfigurationError("backbone: too many blocks requested");
  const auto sc = static_cast<std::size_t>(spec.stem.channels), ic = static_cast<std::size_t>(in_channels);
  const auto k = static_cast<std::size_t>(spec.stem.kernel);
  stem_stride_ = spec.stem.stride;
  stem_pad_ = spec.stem.kernel / 2;
  stem_weight_name_ = name + ".stem.weight";
  if (stem3d) {
    stem_w_ = params.add(stem_weight_name_, nn::kaiming_uniform<T>({sc, ic, 2, k, k}, ic * 2 * k * k, rng));
  } else {
    stem_w_ = params.add(stem_weight_name_, nn::kaiming_uniform<T>({sc, ic, k, k}, ic * k * k, rng));
  }
  stem_b_ = params.add(name + ".stem.bias", BasicTensor<T>({sc}));
  stem_gn_ = nn::GroupNorm<T>(params, name + ".stem.gn", sc, spec.groups);

  int h = conv_out(height, spec.stem.kernel, stem_stride_, stem_pad_);
  int w = conv_out(width, spec.stem.kernel, stem_stride_, stem_pad_);
  int c = spec.stem.channels;
  for (int i = 0; i < n_blocks; ++i) {
    const auto& b = spec.blocks[static_cast<std::size_t>(i)];
    blocks_.emplace_back(params, name + ".block" + std::to_string(i), c, b.channels, b.stride, spec.groups, rng);
    h = conv_out(h, 3, b.stride, 1);
    w = conv_out(w, 3, b.stride, 1);
    c = b.channels;
    if (h <= 0 || w <= 0) throw ConfigurationError("backbone: input resolution too small for the block schedule");
    block_shapes_.push_back({static_cast<std::size_t>(c), static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  }
  if (with_head) {
    const std::size_t flat = static_cast<std::size_t>(c) * h * w;
    head_ = nn::Linear<T>(params, name + ".head", flat, static_cast<std::size_t>(spec.embed_dim),
                          nn::LinearInit::kKaiming, rng);
  }
}

template <typename T>
Var<T> Backbone<T>::stem(const Var<T>& x) const {
  if (!stem3d_) return nn::relu(stem_gn_(nn::conv2d(x, stem_w_, stem_b_, stem_stride_, stem_pad_)));
  // N x D' x C x H x W; normalise each depth slice, then sum the slices.
  const Var<T> y = nn::conv3d(x, stem_w_, stem_b_, stem_stride_, stem_pad_, 1);
  const Shape s = y.shape();
  const std::size_t n = s[0], d = s[1];
  Var<T> flat = nn::reshape(y, {n * d, s[2], s[3], s[4]});
  flat = nn::relu(stem_gn_(flat));
  return nn::sum_axis1(nn::reshape(flat, {n, d, s[2], s[3], s[4]}));
}

template <typename T>
Var<T> Backbone<T>::block(int i, const Var<T>& x, const FilmFactors<T>* film, FilmPlacement placement,
                          BlockTrace<T>* trace) const {
  return blocks_.at(static_cast<std::size_t>(i))(x, film, placement, trace);
}

template <typename T>
Var<T> Backbone<T>::head(const Var<T>& x) const {
  if (!has_head_) throw ConfigurationError("backbone built without a head");
  const std::size_t n = x.dim(0);
  return nn::relu(head_(nn::reshape(x, {n, x.size() / n})));
}

template <typename T>
Var<T> Backbone<T>::forward(const Var<T>& x, std::vector<Var<T>>* block_outputs) const {
  Var<T> h = stem(x);
  for (int i = 0; i < num_blocks(); ++i) {
    h = block(i, h);
    if (block_outputs) block_outputs->push_back(h);
  }
  return has_head_ ? head(h) : h;
}

template <typename T>
FilmMapping<T>::FilmMapping(ParameterSet<T>& params, const std::string& name, int channels, MidMapping mode)
    : mode_(mode) {
  const auto c = static_cast<std::size_t>(channels);
  const Shape wshape = mode == MidMapping::kFgHr ? Shape{c, c, 1, 1} : Shape{c, c};
  wg_ = params.add(name + ".gamma.weight", BasicTensor<T>(wshape));
  bg_ = params.add(name + ".gamma.bias", BasicTensor<T>({c}, T(1)));
  wb_ = params.add(name + ".beta.weight", BasicTensor<T>(wshape));
  bb_ = params.add(name + ".beta.bias", BasicTensor<T>({c}));
}

template <typename T>
FilmFactors<T> FilmMapping<T>::operator()(const Var<T>& z_goal) const {
  if (mode_ == MidMapping::kFgHr) {
    return {nn::conv2d(z_goal, wg_, bg_, 1, 0), nn::conv2d(z_goal, wb_, bb_, 1, 0)};
  }
  const Var<T> pooled = nn::global_avg_pool(z_goal);
  return {nn::linear(pooled, wg_, bg_), nn::linear(pooled, wb_, bb_)};
}

template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class Backbone<float>;
template class Backbone<double>;
template class FilmMapping<float>;
template class FilmMapping<double>;

}  // namespace goalnav::fusion

#include "goalnav/fusion/encoder.hpp"

namespace goalnav::fusion {

using nn::ConfigurationError;

namespace {

template <typename T>
void check_pair(const Var<T>& obs, const Var<T>& goal, int resolution) {
  if (obs.shape().size() != 4 || obs.shape() != goal.shape() || obs.dim(1) != 3) {
    throw ConfigurationError("observation and goal must both be N x 3 x H x W, got " + nn::shape_string(obs.shape()) +
                             " and " + nn::shape_string(goal.shape()));
  }
  if (obs.dim(2) != static_cast<std::size_t>(resolution) || obs.dim(3) != static_cast<std::size_t>(resolution)) {
    throw ConfigurationError("image resolution " + std::to_string(obs.dim(2)) + "x" + std::to_string(obs.dim(3)) +
                             " does not match configured " + std::to_string(resolution));
  }
}

template <typename T>
Var<T> flat(const Var<T>& x) {
  const std::size_t n = x.dim(0);
  return nn::reshape(x, {n, x.size() / n});
}

template <typename T>
BasicTensor<T> first_item(const Var<T>& x) {
  const Shape& s = x.shape();
  Shape one(s.begin() + 1, s.end());
  BasicTensor<T> out(one);
  const auto src = x.value().data();
  std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(out.size()), out.data().begin());
  return out;
}

}  // namespace

template <typename T>
FusionEncoder<T>::FusionEncoder(ParameterSet<T>& params, const FusionConfig& cfg, Rng& rng, const std::string& prefix)
    : cfg_(cfg) {
  validate(cfg);
  const int r = cfg.resolution;
  const auto& bb = cfg.backbone;
  const auto e = static_cast<std::size_t>(bb.embed_dim);
  switch (cfg.mechanism) {
    case Mechanism::kEarly:
      switch (cfg.early_concat) {
        case EarlyConcat::kChannel:
          obs_ = std::make_shared<Backbone<T>>(params, prefix + ".joint", bb, 6, r, r, rng);
          break;
        case EarlyConcat::kEdge:
          obs_ = std::make_shared<Backbone<T>>(params, prefix + ".joint", bb, 3, r, 2 * r, rng);
          break;
        case EarlyConcat::kStack3d:
          obs_ = std::make_shared<Backbone<T>>(params, prefix + ".joint", bb, 3, r, r, rng, true);
          break;
      }
      break;
    case Mechanism::kLate:
    case Mechanism::kSkip: {
      obs_ = std::make_shared<Backbone<T>>(params, prefix + ".obs", bb, 3, r, r, rng);
      if (cfg.modeling == Modeling::kTied) {
        goal_ = obs_;
      } else {
        goal_ = std::make_shared<Backbone<T>>(params, prefix + ".goal", bb, 3, r, r, rng);
      }
      if (cfg.mechanism == Mechanism::kLate) {
        fuse_ = nn::Linear<T>(params, prefix + ".fuse", 2 * e, e, nn::LinearInit::kKaiming, rng);
      } else {
        const auto h = static_cast<std::size_t>(cfg.skip_hidden);
        kp_fc_ = nn::Linear<T>(params, prefix + ".keypoints", static_cast<std::size_t>(4 * cfg.skip_k), h,
                               nn::LinearInit::kKaiming, rng);
        fuse_ = nn::Linear<T>(params, prefix + ".fuse", 2 * e + h, e, nn::LinearInit::kKaiming, rng);
      }
      break;
    }
    case Mechanism::kMid:
      obs_ = std::make_shared<Backbone<T>>(params, prefix + ".obs", bb, 3, r, r, rng);
      // Only the first mid_depth goal blocks feed the mappings.
      goal_ = std::make_shared<Backbone<T>>(params, prefix + ".goal", bb, 3, r, r, rng, false, cfg.mid_depth, false);
      for (int i = 0; i < cfg.mid_depth; ++i) {
        film_.emplace_back(params, prefix + ".film" + std::to_string(i),
                           static_cast<int>(obs_->block_shape(i)[0]), cfg.mid_mapping);
      }
      break;
  }
}

template <typename T>
Var<T> FusionEncoder<T>::forward(const Var<T>& obs, const Var<T>& goal, const Var<T>& keypoints,
                                 FusionTrace<T>* trace) const {
  switch (cfg_.mechanism) {
    case Mechanism::kLate: return encode_late(obs, goal, trace);
    case Mechanism::kEarly: return encode_early(obs, goal, trace);
    case Mechanism::kMid: return encode_mid(obs, goal, trace);
    case Mechanism::kSkip: return encode_skip(obs, goal, keypoints, trace);
  }
  throw ConfigurationError("unknown mechanism");
}

template <typename T>
Var<T> FusionEncoder<T>::observation_embedding(const Var<T>& obs) const {
  return obs_->forward(obs);
}

template <typename T>
Var<T> FusionEncoder<T>::goal_embedding(const Var<T>& goal) const {
  if (!goal_ || !goal_->has_head()) throw ConfigurationError("mechanism has no goal embedding");
  return goal_->forward(goal);
}

template <typename T>
Var<T> FusionEncoder<T>::encode_late(const Var<T>& obs, const Var<T>& goal, FusionTrace<T>* trace) const {
  if (cfg_.mechanism != Mechanism::kLate) throw ConfigurationError("encode_late on a non-LATE encoder");
  check_pair(obs, goal, cfg_.resolution);
  std::vector<Var<T>> blocks;
  const Var<T> zo = obs_->forward(obs, trace ? &blocks : nullptr);
  if (trace) trace->pre_fusion = trace->post_fusion = first_item(blocks.back());
  const Var<T> zg = goal_->forward(goal);
  return nn::relu(fuse_(nn::concat_cols<T>({zo, zg})));
}

template <typename T>
Var<T> FusionEncoder<T>::early_input(const Var<T>& obs, const Var<T>& goal) const {
  if (cfg_.mechanism != Mechanism::kEarly) throw ConfigurationError("early_input on a non-EARLY encoder");
  check_pair(obs, goal, cfg_.resolution);
  const std::size_t n = obs.dim(0), h = obs.dim(2), w = obs.dim(3);
  switch (cfg_.early_concat) {
    case EarlyConcat::kChannel:
      return nn::reshape(nn::concat_cols<T>({flat(obs), flat(goal)}), {n, 6, h, w});
    case EarlyConcat::kEdge: {
      const Var<T> a = nn::reshape(obs, {n * 3 * h, w}), b = nn::reshape(goal, {n * 3 * h, w});
      return nn::reshape(nn::concat_cols<T>({a, b}), {n, 3, h, 2 * w});
    }
    case EarlyConcat::kStack3d:
      return nn::reshape(nn::concat_cols<T>({flat(obs), flat(goal)}), {n, 2, 3, h, w});
  }
  throw ConfigurationError("unknown early_concat");
}

template <typename T>
Var<T> FusionEncoder<T>::encode_early(const Var<T>& obs, const Var<T>& goal, FusionTrace<T>* trace) const {
  const Var<T> x = early_input(obs, goal);
  std::vector<Var<T>> blocks;
  Var<T> z = obs_->forward(x, trace ? &blocks : nullptr);
  if (trace) trace->pre_fusion = trace->post_fusion = first_item(blocks.back());
  return z;
}

template <typename T>
Var<T> FusionEncoder<T>::encode_mid(const Var<T>& obs, const Var<T>& goal, FusionTrace<T>* trace, int depth) const {
  if (cfg_.mechanism != Mechanism::kMid) throw ConfigurationError("encode_mid on a non-MID encoder");
  check_pair(obs, goal, cfg_.resolution);
  const int d = depth < 0 ? cfg_.mid_depth : depth;
  if (d > cfg_.mid_depth) throw ConfigurationError("encode_mid: depth exceeds the configured mid_depth");

  std::vector<FilmFactors<T>> factors;
  if (d > 0) {
    Var<T> zg = goal_->stem(goal);
    for (int i = 0; i < d; ++i) {
      zg = goal_->block(i, zg);
      factors.push_back(film_[static_cast<std::size_t>(i)](zg));
    }
  }
  Var<T> h = obs_->stem(obs);
  BlockTrace<T> bt;
  for (int i = 0; i < obs_->num_blocks(); ++i) {
    const bool conditioned = i < d;
    const bool record = trace && (conditioned ? i == d - 1 : (d == 0 && i == obs_->num_blocks() - 1));
    h = obs_->block(i, h, conditioned ? &factors[static_cast<std::size_t>(i)] : nullptr, cfg_.film_placement,
                    record ? &bt : nullptr);
  }
  if (trace) {
    auto first = [](const BasicTensor<T>& t) {
      Shape one(t.shape().begin() + 1, t.shape().end());
      BasicTensor<T> out(one);
      std::copy(t.data().begin(), t.data().begin() + static_cast<std::ptrdiff_t>(out.size()), out.data().begin());
      return out;
    };
    trace->pre_fusion = first(bt.pre_film);
    trace->post_fusion = first(bt.post_film);
  }
  return obs_->head(h);
}

template <typename T>
Var<T> FusionEncoder<T>::encode_skip(const Var<T>& obs, const Var<T>& goal, const Var<T>& keypoints,
                                     FusionTrace<T>* trace) const {
  if (cfg_.mechanism != Mechanism::kSkip) throw ConfigurationError("encode_skip on a non-SKIP encoder");
  check_pair(obs, goal, cfg_.resolution);
  if (!keypoints.defined() || keypoints.shape() != Shape{obs.dim(0), static_cast<std::size_t>(4 * cfg_.skip_k)}) {
    throw ConfigurationError("keypoint input must be N x " + std::to_string(4 * cfg_.skip_k));
  }
  std::vector<Var<T>> blocks;
  const Var<T> zo = obs_->forward(obs, trace ? &blocks : nullptr);
  if (trace) trace->pre_fusion = trace->post_fusion = first_item(blocks.back());
  const Var<T> zg = goal_->forward(goal);
  const Var<T> zk = nn::relu(kp_fc_(keypoints));
  return nn::relu(fuse_(nn::concat_cols<T>({zg, zo, zk})));
}

template <typename T>
BasicTensor<T> images_to_tensor(const std::vector<const world::RGBImage*>& images) {
  if (images.empty()) throw ConfigurationError("images_to_tensor: empty batch");
  const int h = images.front()->height, w = images.front()->width;
  const std::size_t per = static_cast<std::size_t>(3) * h * w;
  BasicTensor<T> out({images.size(), 3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  auto dst = out.data();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto* img = images[i];
    if (img->height != h || img->width != w) throw ConfigurationError("images_to_tensor: mixed resolutions");
    for (std::size_t j = 0; j < per; ++j) dst[i * per + j] = static_cast<T>(img->data[j]);
  }
  return out;
}

std::vector<float> keypoint_features(const kp::Detections& goal, const world::RGBImage& obs, int k, int max_points) {
  const auto det = kp::detect(obs, max_points);
  return kp::topk_flatten(kp::match(goal, det), k, obs.width, obs.height);
}

std::vector<float> keypoint_features(const world::RGBImage& goal, const world::RGBImage& obs, int k, int max_points) {
  return keypoint_features(kp::detect(goal, max_points), obs, k, max_points);
}

template class FusionEncoder<float>;
template class FusionEncoder<double>;
template BasicTensor<float> images_to_tensor<float>(const std::vector<const world::RGBImage*>&);
template BasicTensor<double> images_to_tensor<double>(const std::vector<const world::RGBImage*>&);

}  // namespace goalnav::fusion

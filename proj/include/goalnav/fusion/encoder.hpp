#pragma once

#include <memory>
#include <vector>

#include "goalnav/fusion/backbone.hpp"
#include "goalnav/kp/keypoints.hpp"
#include "goalnav/world/render.hpp"

namespace goalnav::fusion {

/// Activation maps (first batch element) around the fusion site.
template <typename T>
struct FusionTrace {
  BasicTensor<T> pre_fusion, post_fusion;  // C x H x W
};

/// Observation/goal encoder pair producing z_fusion of size embed_dim for
/// every mechanism. Images are N x 3 x H x W; the keypoint input for SKIP is
/// an N x 4k constant built by keypoint_features.
template <typename T>
class FusionEncoder {
 public:
  FusionEncoder(ParameterSet<T>& params, const FusionConfig& cfg, Rng& rng, const std::string& prefix = "encoder");

  Var<T> forward(const Var<T>& obs, const Var<T>& goal, const Var<T>& keypoints = {},
                 FusionTrace<T>* trace = nullptr) const;

  /// z = FC(embed_o(v_o) ++ embed_g(v_g)).
  Var<T> encode_late(const Var<T>& obs, const Var<T>& goal, FusionTrace<T>* trace = nullptr) const;
  /// One joint backbone over the combined input.
  Var<T> encode_early(const Var<T>& obs, const Var<T>& goal, FusionTrace<T>* trace = nullptr) const;
  /// Observation encoder with goal-conditioned FiLM on its first `depth`
  /// blocks (config value when depth < 0; depth 0 means no conditioning).
  Var<T> encode_mid(const Var<T>& obs, const Var<T>& goal, FusionTrace<T>* trace = nullptr, int depth = -1) const;
  /// z = FC(z_g ++ z_o ++ FC(z_k)).
  Var<T> encode_skip(const Var<T>& obs, const Var<T>& goal, const Var<T>& keypoints,
                     FusionTrace<T>* trace = nullptr) const;

  /// Unconditioned observation-branch embedding.
  Var<T> observation_embedding(const Var<T>& obs) const;
  /// Goal-branch embedding (LATE and SKIP); the observation encoder when tied.
  Var<T> goal_embedding(const Var<T>& goal) const;
  /// Input actually seen by the first stem for EARLY fusion.
  Var<T> early_input(const Var<T>& obs, const Var<T>& goal) const;

  const FusionConfig& config() const { return cfg_; }
  int embed_dim() const { return cfg_.backbone.embed_dim; }
  bool uses_keypoints() const { return cfg_.mechanism == Mechanism::kSkip; }
  int keypoint_dim() const { return uses_keypoints() ? 4 * cfg_.skip_k : 0; }
  const Backbone<T>& observation_backbone() const { return *obs_; }
  const Backbone<T>* goal_backbone() const { return goal_.get(); }

 private:
  FusionConfig cfg_;
  std::shared_ptr<Backbone<T>> obs_, goal_;
  std::vector<FilmMapping<T>> film_;
  nn::Linear<T> fuse_, kp_fc_;
};

/// Stacks images into an N x 3 x H x W tensor.
template <typename T>
BasicTensor<T> images_to_tensor(const std::vector<const world::RGBImage*>& images);

/// topk_flatten(match(detect(goal), detect(obs)), k) with goal coordinates
/// first in each quadruple.
std::vector<float> keypoint_features(const kp::Detections& goal, const world::RGBImage& obs, int k,
                                     int max_points);
std::vector<float> keypoint_features(const world::RGBImage& goal, const world::RGBImage& obs, int k,
                                     int max_points);

}  // namespace goalnav::fusion

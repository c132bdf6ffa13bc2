#pragma once

#include <array>
#include <vector>

#include "goalnav/world/render.hpp"

namespace goalnav::kp {

using world::RGBImage;

inline constexpr int kPatch = 8;
inline constexpr int kDescriptorSize = kPatch * kPatch;
inline constexpr int kDefaultTopK = 16;

struct Keypoint {
  float x = 0.0f;
  float y = 0.0f;
  float score = 0.0f;  // Harris response
};

struct Detections {
  int width = 0;
  int height = 0;
  std::vector<Keypoint> points;
  std::vector<std::array<float, kDescriptorSize>> descriptors;  // unit L2 norm
};

struct DetectorOptions {
  float harris_k = 0.04f;
  int nms_radius = 5;
  float relative_threshold = 0.01f;  // fraction of the strongest response
  float absolute_threshold = 1e-6f;
};

/// Harris corners with non-maximum suppression, strongest first, each with a
/// mean-subtracted 8x8 grayscale patch descriptor.
Detections detect(const RGBImage& image, int max_points, const DetectorOptions& opts = {});

struct Match {
  float x = 0, y = 0;    // in a
  float x2 = 0, y2 = 0;  // in b
  float score = 0;       // cosine similarity clamped to [0, 1]
  int index_a = 0, index_b = 0;
};

using MatchSet = std::vector<Match>;

/// Mutual nearest neighbours under cosine similarity whose descriptor
/// distance ratio best/second-best is below `ratio` in both directions.
/// Sorted by descending score.
MatchSet match(const Detections& a, const Detections& b, float ratio = 0.9f);

/// (x, y, x', y') of the top-k matches normalised by image size; unused
/// slots are -1. Length is always 4k.
std::vector<float> topk_flatten(const MatchSet& m, int k, int width, int height);

/// a and b side by side with a line per match.
RGBImage draw_matches(const RGBImage& a, const RGBImage& b, const MatchSet& m);

/// Luma in [0, 1], row-major H x W.
std::vector<float> grayscale(const RGBImage& image);

}  // namespace goalnav::kp

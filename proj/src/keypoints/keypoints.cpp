#include "goalnav/kp/keypoints.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace goalnav::kp {

std::vector<float> grayscale(const RGBImage& image) {
  const int h = image.height, w = image.width;
  std::vector<float> g(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      g[static_cast<std::size_t>(y) * w + x] =
          0.299f * image.at(0, y, x) + 0.587f * image.at(1, y, x) + 0.114f * image.at(2, y, x);
  return g;
}

namespace {

// 5-tap binomial smoothing, clamped at the border.
std::vector<float> blur(const std::vector<float>& in, int w, int h) {
  static constexpr float k[5] = {1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
  std::vector<float> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int t = -2; t <= 2; ++t) acc += k[t + 2] * in[y * w + std::clamp(x + t, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      for (int t = -2; t <= 2; ++t) acc += k[t + 2] * tmp[std::clamp(y + t, 0, h - 1) * w + x];
      out[y * w + x] = acc;
    }
  return out;
}

}  // namespace

Detections detect(const RGBImage& image, int max_points, const DetectorOptions& opts) {
  Detections out;
  out.width = image.width;
  out.height = image.height;
  const int w = image.width, h = image.height;
  if (max_points <= 0 || w < kPatch + 2 || h < kPatch + 2) return out;

  const auto g = grayscale(image);
  auto at = [&](int x, int y) { return g[std::clamp(y, 0, h - 1) * w + std::clamp(x, 0, w - 1)]; };
  std::vector<float> ixx(g.size()), iyy(g.size()), ixy(g.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // Sobel
      const float gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) -
                       (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
      const float gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) -
                       (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      ixx[i] = gx * gx;
      iyy[i] = gy * gy;
      ixy[i] = gx * gy;
    }
  const auto sxx = blur(ixx, w, h), syy = blur(iyy, w, h), sxy = blur(ixy, w, h);
  std::vector<float> r(g.size());
  float rmax = 0.0f;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const float tr = sxx[i] + syy[i];
    r[i] = sxx[i] * syy[i] - sxy[i] * sxy[i] - opts.harris_k * tr * tr;
    rmax = std::max(rmax, r[i]);
  }
  const float thresh = std::max(opts.absolute_threshold, opts.relative_threshold * rmax);

  // Descriptor patch spans [x - 4, x + 3], so keep that inside the image.
  const int half = kPatch / 2, rad = opts.nms_radius;
  std::vector<Keypoint> cand;
  for (int y = half; y <= h - half; ++y)
    for (int x = half; x <= w - half; ++x) {
      const float v = r[y * w + x];
      if (!(v > thresh)) continue;
      bool is_max = true;
      for (int dy = -rad; dy <= rad && is_max; ++dy)
        for (int dx = -rad; dx <= rad; ++dx) {
          if (dx * dx + dy * dy > rad * rad || (dx == 0 && dy == 0)) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const float u = r[ny * w + nx];
          // Ties go to the earlier pixel in raster order.
          if (u > v || (u == v && (ny * w + nx) < (y * w + x))) {
            is_max = false;
            break;
          }
        }
      if (is_max) cand.push_back({static_cast<float>(x), static_cast<float>(y), v});
    }
  std::stable_sort(cand.begin(), cand.end(), [](const Keypoint& a, const Keypoint& b) { return a.score > b.score; });

  for (const Keypoint& kp : cand) {
    if (static_cast<int>(out.points.size()) >= max_points) break;
    std::array<float, kDescriptorSize> d{};
    const int x0 = static_cast<int>(kp.x) - half, y0 = static_cast<int>(kp.y) - half;
    float mean = 0;
    for (int j = 0; j < kPatch; ++j)
      for (int i = 0; i < kPatch; ++i) {
        d[j * kPatch + i] = at(x0 + i, y0 + j);
        mean += d[j * kPatch + i];
      }
    mean /= kDescriptorSize;
    double norm = 0;
    for (float& v : d) {
      v -= mean;
      norm += static_cast<double>(v) * v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (float& v : d) v = static_cast<float>(v / norm);
    out.points.push_back(kp);
    out.descriptors.push_back(d);
  }
  return out;
}

namespace {

float dot(const std::array<float, kDescriptorSize>& a, const std::array<float, kDescriptorSize>& b) {
  double s = 0;
  for (int i = 0; i < kDescriptorSize; ++i) s += static_cast<double>(a[i]) * b[i];
  return static_cast<float>(s);
}

struct Nearest {
  int best = -1;
  bool distinctive = false;
};

// For unit vectors, distance = sqrt(2 - 2 * similarity).
std::vector<Nearest> nearest(const std::vector<std::vector<float>>& sim, bool transpose, std::size_t rows,
                             std::size_t cols, float ratio) {
  std::vector<Nearest> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    float s1 = -2.0f, s2 = -2.0f;
    int best = -1;
    for (std::size_t j = 0; j < cols; ++j) {
      const float s = transpose ? sim[j][i] : sim[i][j];
      if (s > s1) {
        s2 = s1;
        s1 = s;
        best = static_cast<int>(j);
      } else if (s > s2) {
        s2 = s;
      }
    }
    out[i].best = best;
    if (best < 0) continue;
    if (cols == 1) {
      out[i].distinctive = true;
      continue;
    }
    const float d1 = std::sqrt(std::max(0.0f, 2.0f - 2.0f * s1));
    const float d2 = std::sqrt(std::max(0.0f, 2.0f - 2.0f * s2));
    out[i].distinctive = d1 < ratio * d2;
  }
  return out;
}

}  // namespace

MatchSet match(const Detections& a, const Detections& b, float ratio) {
  MatchSet out;
  const std::size_t na = a.descriptors.size(), nb = b.descriptors.size();
  if (na == 0 || nb == 0) return out;
  std::vector<std::vector<float>> sim(na, std::vector<float>(nb));
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) sim[i][j] = dot(a.descriptors[i], b.descriptors[j]);
  const auto ab = nearest(sim, false, na, nb, ratio);
  const auto ba = nearest(sim, true, nb, na, ratio);
  for (std::size_t i = 0; i < na; ++i) {
    const int j = ab[i].best;
    if (j < 0 || ba[j].best != static_cast<int>(i)) continue;
    if (!ab[i].distinctive || !ba[j].distinctive) continue;
    Match m;
    m.x = a.points[i].x;
    m.y = a.points[i].y;
    m.x2 = b.points[j].x;
    m.y2 = b.points[j].y;
    m.score = std::clamp(sim[i][j], 0.0f, 1.0f);
    m.index_a = static_cast<int>(i);
    m.index_b = j;
    out.push_back(m);
  }
  std::stable_sort(out.begin(), out.end(), [](const Match& p, const Match& q) { return p.score > q.score; });
  return out;
}

std::vector<float> topk_flatten(const MatchSet& m, int k, int width, int height) {
  if (k < 1) throw std::invalid_argument("topk_flatten: k must be at least 1");
  if (width <= 0 || height <= 0) throw std::invalid_argument("topk_flatten: image size must be positive");
  std::vector<float> z(static_cast<std::size_t>(4) * k, -1.0f);
  const std::size_t n = std::min<std::size_t>(m.size(), static_cast<std::size_t>(k));
  const float fw = static_cast<float>(width), fh = static_cast<float>(height);
  for (std::size_t i = 0; i < n; ++i) {
    z[4 * i + 0] = std::clamp(m[i].x / fw, 0.0f, 1.0f);
    z[4 * i + 1] = std::clamp(m[i].y / fh, 0.0f, 1.0f);
    z[4 * i + 2] = std::clamp(m[i].x2 / fw, 0.0f, 1.0f);
    z[4 * i + 3] = std::clamp(m[i].y2 / fh, 0.0f, 1.0f);
  }
  return z;
}

RGBImage draw_matches(const RGBImage& a, const RGBImage& b, const MatchSet& m) {
  const int h = std::max(a.height, b.height);
  RGBImage out(h, a.width + b.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) out.at(c, y, x) = a.at(c, y, x);
    for (int y = 0; y < b.height; ++y)
      for (int x = 0; x < b.width; ++x) out.at(c, y, a.width + x) = b.at(c, y, x);
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    const float x0 = m[i].x, y0 = m[i].y, x1 = m[i].x2 + a.width, y1 = m[i].y2;
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    // Strong matches are green, weak ones red.
    const float s = m[i].score;
    for (int t = 0; t <= steps; ++t) {
      const float u = static_cast<float>(t) / steps;
      const int x = static_cast<int>(std::lround(x0 + u * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + u * (y1 - y0)));
      if (x < 0 || y < 0 || x >= out.width || y >= out.height) continue;
      out.at(0, y, x) = 1.0f - s;
      out.at(1, y, x) = s;
      out.at(2, y, x) = 0.0f;
    }
  }
  return out;
}

}  // namespace goalnav::kp

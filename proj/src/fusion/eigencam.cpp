#include "goalnav/fusion/eigencam.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace goalnav::fusion {

template <typename T>
nn::Tensor eigencam(const nn::BasicTensor<T>& activation) {
  if (activation.rank() != 3) throw nn::ConfigurationError("eigencam expects a C x H x W activation");
  const auto c = static_cast<Eigen::Index>(activation.dim(0));
  const auto h = activation.dim(1), w = activation.dim(2);
  const auto hw = static_cast<Eigen::Index>(h * w);
  Eigen::MatrixXd m(hw, c);
  for (Eigen::Index ch = 0; ch < c; ++ch)
    for (Eigen::Index p = 0; p < hw; ++p) {
      const double v = static_cast<double>(activation[static_cast<std::size_t>(ch * hw + p)]);
      if (!std::isfinite(v)) throw nn::NumericalError("eigencam: non-finite activation");
      m(p, ch) = v;
    }
  nn::Tensor out({h, w});
  const Eigen::RowVectorXd col_sums = m.colwise().sum();
  Eigen::MatrixXd centred = m.rowwise() - col_sums / static_cast<double>(hw);
  const double scale = centred.cwiseAbs().maxCoeff();
  if (!(scale > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))) return out;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred / scale, Eigen::ComputeThinV);
  Eigen::VectorXd v1 = svd.matrixV().col(0);
  if (v1.dot(col_sums.transpose()) < 0.0) v1 = -v1;
  const Eigen::VectorXd proj = centred * v1;
  const double lo = proj.minCoeff(), hi = proj.maxCoeff();
  if (!(hi - lo > 1e-12 * scale)) return out;
  for (Eigen::Index p = 0; p < hw; ++p) out[static_cast<std::size_t>(p)] = static_cast<float>((proj(p) - lo) / (hi - lo));
  return out;
}

template nn::Tensor eigencam<float>(const nn::BasicTensor<float>&);
template nn::Tensor eigencam<double>(const nn::BasicTensor<double>&);

world::RGBImage overlay_heatmap(const world::RGBImage& image, const nn::Tensor& heatmap, float alpha) {
  world::RGBImage out = image;
  const int hh = static_cast<int>(heatmap.dim(0)), hw = static_cast<int>(heatmap.dim(1));
  auto sample = [&](int y, int x) {
    const double fy = std::clamp((y + 0.5) * hh / image.height - 0.5, 0.0, hh - 1.0);
    const double fx = std::clamp((x + 0.5) * hw / image.width - 0.5, 0.0, hw - 1.0);
    const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
    const int y1 = std::min(y0 + 1, hh - 1), x1 = std::min(x0 + 1, hw - 1);
    const double ty = fy - y0, tx = fx - x0;
    auto at = [&](int yy, int xx) { return static_cast<double>(heatmap[static_cast<std::size_t>(yy * hw + xx)]); };
    return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) + ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
  };
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const float v = static_cast<float>(std::clamp(sample(y, x), 0.0, 1.0));
      const float ramp[3] = {std::clamp(2.0f * v, 0.0f, 1.0f), std::clamp(1.0f - std::abs(2.0f * v - 1.0f), 0.0f, 1.0f),
                             std::clamp(2.0f * (1.0f - v), 0.0f, 1.0f)};
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = (1.0f - alpha) * image.at(c, y, x) + alpha * ramp[c];
    }
  return out;
}

}  // namespace goalnav::fusion

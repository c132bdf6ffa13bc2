#include <Eigen/Dense>
#include <cmath>

#include "goalnav/nn/parameters.hpp"

namespace goalnav::nn {

template <typename T>
BasicTensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
BasicTensor<T> orthogonal(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  const std::size_t big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd a(big, small);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = dist(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign correction makes the distribution uniform over orthogonal matrices.
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(small, small);
  for (std::size_t j = 0; j < small; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  BasicTensor<T> t({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = rows >= cols ? q(i, j) : q(j, i);
      t[i * cols + j] = static_cast<T>(gain * v);
    }
  }
  return t;
}

template BasicTensor<float> kaiming_uniform<float>(Shape, std::size_t, Rng&);
template BasicTensor<double> kaiming_uniform<double>(Shape, std::size_t, Rng&);
template BasicTensor<float> orthogonal<float>(std::size_t, std::size_t, double, Rng&);
template BasicTensor<double> orthogonal<double>(std::size_t, std::size_t, double, Rng&);

}  // namespace goalnav::nn

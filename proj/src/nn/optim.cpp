#include "goalnav/nn/optim.hpp"

#include <cmath>

namespace goalnav::nn {

template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params.items()) {
    for (T g : p.var.grad().data()) total += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / (norm + 1e-6));
    for (auto& p : params.items()) {
      auto var = p.var;
      for (T& g : var.mutable_grad().data()) g *= factor;
    }
  }
  return norm;
}

template <typename T>
bool grads_finite(const ParameterSet<T>& params) {
  for (const auto& p : params.items()) {
    for (T g : p.var.grad().data()) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

template <typename T>
Adam<T>::Adam(ParameterSet<T>& params, Options options)
    : params_(&params), options_(options) {
  for (const auto& p : params.items()) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double step_size = lr / c1;
  for (std::size_t i = 0; i < params_->size(); ++i) {
    auto var = params_->items()[i].var;
    const auto& g = var.grad();
    auto& w = var.mutable_value();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = static_cast<T>(b1 * m[k] + (1.0 - b1) * g[k]);
      v[k] = static_cast<T>(b2 * v[k] + (1.0 - b2) * static_cast<double>(g[k]) * g[k]);
      const double denom = std::sqrt(v[k] / c2) + options_.eps;
      w[k] = static_cast<T>(w[k] - step_size * m[k] / denom);
    }
  }
}

template <typename T>
void Adam<T>::restore(std::vector<BasicTensor<T>> m, std::vector<BasicTensor<T>> v,
                      std::size_t steps) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw ConfigurationError("optimizer state does not match parameter count");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].shape() != m_[i].shape() || v[i].shape() != v_[i].shape()) {
      throw ConfigurationError("optimizer state shape mismatch at " +
                               params_->items()[i].name);
    }
  }
  m_ = std::move(m);
  v_ = std::move(v);
  steps_ = steps;
}

template double clip_grad_norm<float>(ParameterSet<float>&, double);
template double clip_grad_norm<double>(ParameterSet<double>&, double);
template bool grads_finite<float>(const ParameterSet<float>&);
template bool grads_finite<double>(const ParameterSet<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace goalnav::nn

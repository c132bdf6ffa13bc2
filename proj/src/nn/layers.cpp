#include "goalnav/nn/layers.hpp"

#include <cmath>

namespace goalnav::nn {

namespace {
template <typename T>
void check_finite(const BasicTensor<T>& t, const char* what) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + what);
  }
}
}  // namespace

template <typename T>
Var<T> GruCell<T>::operator()(const Var<T>& h_prev, const Var<T>& x) const {
  if (h_prev.value().rank() != 2 || h_prev.dim(1) != hidden_size) {
    throw ConfigurationError("recurrent cell: hidden state " + shape_string(h_prev.shape()) +
                             " does not match hidden size " + std::to_string(hidden_size));
  }
  if (x.value().rank() != 2 || x.dim(1) != input_size || x.dim(0) != h_prev.dim(0)) {
    throw ConfigurationError("recurrent cell: input " + shape_string(x.shape()) +
                             " does not match input size " + std::to_string(input_size));
  }
  check_finite(h_prev.value(), "recurrent hidden state");
  check_finite(x.value(), "recurrent input");
  const Var<T> r = sigmoid(add(ir(x), hr(h_prev)));
  const Var<T> u = sigmoid(add(iu(x), hu(h_prev)));
  const Var<T> n = tanh(add(in(x), mul(r, hn(h_prev))));
  // (1 - u) * n + u * h = n + u * (h - n)
  return add(n, mul(u, sub(h_prev, n)));
}

template struct GruCell<float>;
template struct GruCell<double>;

}  // namespace goalnav::nn

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "goalnav/nn/autograd.hpp"

namespace goalnav::nn {

template <typename T>
struct NamedParameter {
  std::string name;
  Var<T> var;
};

/// Registry owning every trainable tensor of a model under a unique
/// dotted path ("obs_encoder.block1.conv1.weight").
template <typename T>
class ParameterSet {
 public:
  Var<T> add(const std::string& name, BasicTensor<T> init) {
    if (index_.count(name)) {
      throw ConfigurationError("duplicate parameter name: " + name);
    }
    Var<T> v(std::move(init), true);
    index_.emplace(name, params_.size());
    params_.push_back({name, v});
    return v;
  }

  const std::vector<NamedParameter<T>>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const Var<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigurationError("unknown parameter: " + name);
    return params_[it->second].var;
  }

  /// Total number of scalars.
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  /// Copies values (with conversion) from a registry with identical layout.
  template <typename U>
  void copy_values_from(const ParameterSet<U>& other) {
    if (other.size() != params_.size()) {
      throw ConfigurationError("parameter registries differ in size");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = other.items()[i];
      auto& dst = params_[i];
      if (src.name != dst.name || src.var.shape() != dst.var.shape()) {
        throw ConfigurationError("parameter layout mismatch at " + dst.name);
      }
      auto& out = dst.var.mutable_value();
      const auto& in = src.var.value();
      for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<T>(in[k]);
    }
  }

 private:
  std::vector<NamedParameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

using Rng = std::mt19937_64;

/// Uniform(-b, b) with b = sqrt(6 / fan_in), the ReLU-gain Kaiming bound.
template <typename T>
BasicTensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);

/// rows x cols matrix with orthonormal rows or columns, scaled by gain.
template <typename T>
BasicTensor<T> orthogonal(std::size_t rows, std::size_t cols, double gain, Rng& rng);

}  // namespace goalnav::nn

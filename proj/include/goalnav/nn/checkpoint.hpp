#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "goalnav/nn/parameters.hpp"

namespace goalnav::nn {

/// On-disk layout: one line of compact JSON (terminated by '\n') listing
/// tensor names and shapes in storage order plus the config hash and free-form
/// metadata, followed by the tensors as concatenated little-endian float32.
struct Checkpoint {
  std::string config_hash;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Appends every parameter under `prefix + name`.
void add_parameters(Checkpoint& ckpt, const ParameterSet<float>& params,
                    const std::string& prefix = "");
/// Loads values for every registered parameter; names and shapes must match.
void load_parameters(const Checkpoint& ckpt, ParameterSet<float>& params,
                     const std::string& prefix = "");

}  // namespace goalnav::nn

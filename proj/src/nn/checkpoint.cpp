#include "goalnav/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace goalnav::nn {

namespace {
constexpr const char* kFormat = "goalnav-checkpoint";
constexpr int kVersion = 1;

static_assert(sizeof(float) == 4);

void write_floats(std::ostream& os, const Tensor& t) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * 4));
  } else {
    for (float f : t.data()) {
      auto u = std::bit_cast<std::uint32_t>(f);
      u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
      os.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
}

void read_floats(std::istream& is, Tensor& t) {
  is.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(t.size() * 4));
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : t.data()) {
      auto u = std::bit_cast<std::uint32_t>(f);
      u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
      f = std::bit_cast<float>(u);
    }
  }
}
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor& Checkpoint::at(const std::string& name) const {
  if (const Tensor* t = find(name)) return *t;
  throw ConfigurationError("checkpoint has no tensor named " + name);
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  header["config_hash"] = ckpt.config_hash;
  header["meta"] = ckpt.meta;
  auto& list = header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    list.push_back({{"name", name}, {"shape", t.shape()}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + tmp.string());
    os << header.dump() << '\n';
    for (const auto& entry : ckpt.tensors) write_floats(os, entry.second);
    if (!os) throw std::runtime_error("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty checkpoint: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  if (header.value("format", "") != kFormat) {
    throw std::runtime_error("not a goalnav checkpoint: " + path.string());
  }
  Checkpoint ckpt;
  ckpt.config_hash = header.value("config_hash", "");
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    Tensor t(entry.at("shape").get<Shape>());
    read_floats(is, t);
    if (!is) throw std::runtime_error("truncated checkpoint: " + path.string());
    ckpt.add(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

void add_parameters(Checkpoint& ckpt, const ParameterSet<float>& params,
                    const std::string& prefix) {
  for (const auto& p : params.items()) ckpt.add(prefix + p.name, p.var.value());
}

void load_parameters(const Checkpoint& ckpt, ParameterSet<float>& params,
                     const std::string& prefix) {
  for (const auto& p : params.items()) {
    const Tensor& src = ckpt.at(prefix + p.name);
    if (src.shape() != p.var.shape()) {
      throw ConfigurationError("checkpoint tensor " + p.name + " has shape " +
                               shape_string(src.shape()) + ", model expects " +
                               shape_string(p.var.shape()));
    }
    auto var = p.var;
    var.mutable_value() = src;
  }
}

}  // namespace goalnav::nn

#include "goalnav/cli/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace goalnav::cli {

using nn::ConfigurationError;

world::EnvSpec RunConfig::env_spec() const {
  world::EnvSpec s;
  s.success_radius = success_radius;
  s.max_steps = max_steps;
  s.motion = motion;
  s.camera = camera();
  return s;
}

train::WorldConfig RunConfig::world_config() const {
  train::WorldConfig w;
  w.train_world_seeds = train_world_seeds;
  w.world_size_m = world_size_m;
  w.cell_size = cell_size;
  w.bands = bands;
  w.env = env_spec();
  return w;
}

RunConfig default_run_config() {
  RunConfig c;
  for (std::uint64_t s = 0; s < 20; ++s) c.train_world_seeds.push_back(s);
  for (std::uint64_t s = 1000; s < 1010; ++s) c.heldout_world_seeds.push_back(s);
  c.model.fusion.resolution = c.resolution;
  return c;
}

void validate(const RunConfig& c) {
  fusion::validate(c.model.fusion);
  policy::validate(c.model.policy);
  train::validate(c.train);
  if (c.model.fusion.resolution != c.resolution)
    throw ConfigurationError("field 'world.resolution' disagrees with the model input resolution");
  if (c.resolution < 16) throw ConfigurationError("field 'world.resolution' must be at least 16");
  if (!(c.world_size_m > 0 && c.cell_size > 0 && c.world_size_m / c.cell_size >= 8))
    throw ConfigurationError("field 'world.size_m' must span at least 8 cells");
  if (c.max_steps < 1) throw ConfigurationError("field 'world.max_steps' must be positive");
  if (!(c.success_radius > 0)) throw ConfigurationError("field 'world.success_radius' must be positive");
  if (c.bands.empty()) throw ConfigurationError("field 'world.bands' is empty");
  for (const auto& b : c.bands)
    if (!(b.min_d > c.success_radius && b.max_d > b.min_d))
      throw ConfigurationError("field 'world.bands' has an invalid band '" + b.name + "'");
  if (c.train_world_seeds.empty()) throw ConfigurationError("field 'world.train_world_seeds' is empty");
  if (c.heldout_world_seeds.empty()) throw ConfigurationError("field 'world.heldout_world_seeds' is empty");
  const std::set<std::uint64_t> train(c.train_world_seeds.begin(), c.train_world_seeds.end());
  for (auto s : c.heldout_world_seeds)
    if (train.count(s))
      throw ConfigurationError("field 'world.heldout_world_seeds' overlaps the training worlds (seed " +
                               std::to_string(s) + ")");
  if (c.probe_count < 0) throw ConfigurationError("field 'episodes.probe_count' must be >= 0");
  if (c.eval_workers < 1) throw ConfigurationError("field 'eval.num_workers' must be positive");
}

nlohmann::json to_json(const RunConfig& c) {
  auto fusion = fusion::to_json(c.model.fusion);
  fusion.erase("resolution");
  auto train = train::to_json(c.train);
  train.erase("seed");
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : c.bands) bands.push_back({{"name", b.name}, {"min_d", b.min_d}, {"max_d", b.max_d}});
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"fusion", fusion},
          {"policy", policy::to_json(c.model.policy)},
          {"train", train},
          {"world",
           {{"size_m", c.world_size_m},
            {"cell_size", c.cell_size},
            {"resolution", c.resolution},
            {"hfov_deg", c.hfov_deg},
            {"max_steps", c.max_steps},
            {"success_radius", c.success_radius},
            {"forward_step", c.motion.forward_step},
            {"turn_deg", c.motion.turn_deg},
            {"clearance", c.motion.clearance},
            {"bands", bands},
            {"train_world_seeds", c.train_world_seeds},
            {"heldout_world_seeds", c.heldout_world_seeds}}},
          {"episodes",
           {{"train", c.train_episodes},
            {"heldout", c.heldout_episodes},
            {"probe", c.probe_episodes},
            {"probe_count", c.probe_count}}},
          {"eval",
           {{"greedy", c.eval_greedy},
            {"seed", c.eval_seed},
            {"num_workers", c.eval_workers},
            {"count_collided_moves", c.count_collided_moves}}}};
}

namespace {

// Every key of `j` must exist in the default layout `ref`.
void check_known(const nlohmann::json& j, const nlohmann::json& ref, const std::string& path) {
  if (!j.is_object()) {
    if (ref.is_object()) throw ConfigurationError("field '" + path + "' must be an object");
    return;
  }
  for (const auto& [k, v] : j.items()) {
    const std::string p = path.empty() ? k : path + "." + k;
    if (!ref.contains(k)) throw ConfigurationError("field '" + p + "' is not a known setting");
    if (ref.at(k).is_object()) check_known(v, ref.at(k), p);
  }
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& out, const std::string& scope) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  bool ok;
  if constexpr (std::is_same_v<V, bool>) ok = v.is_boolean();
  else if constexpr (std::is_same_v<V, std::string>) ok = v.is_string();
  else if constexpr (std::is_floating_point_v<V>) ok = v.is_number();
  else if constexpr (std::is_unsigned_v<V>) ok = v.is_number_unsigned();
  else ok = v.is_number_integer();
  if (!ok) throw ConfigurationError("field '" + scope + key + "' has the wrong type");
  out = v.get<V>();
}

std::vector<std::uint64_t> seeds(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigurationError("field '" + field + "' must be a list of seeds");
  std::vector<std::uint64_t> out;
  for (const auto& s : j) {
    if (!s.is_number_unsigned()) throw ConfigurationError("field '" + field + "' must hold non-negative integers");
    out.push_back(s.get<std::uint64_t>());
  }
  return out;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c = default_run_config();
  if (!j.is_object()) throw ConfigurationError("run config must be a JSON object");
  check_known(j, to_json(c), "");
  read(j, "seed", c.seed, "");
  read(j, "output_dir", c.output_dir, "");
  try {
    if (j.contains("fusion")) c.model.fusion = fusion::fusion_from_json(j.at("fusion"), c.model.fusion);
  } catch (const ConfigurationError& e) {
    throw ConfigurationError(std::string("fusion: ") + e.what());
  }
  if (j.contains("policy")) c.model.policy = policy::policy_from_json(j.at("policy"), c.model.policy);
  if (j.contains("train")) c.train = train::train_from_json(j.at("train"), c.train);
  if (j.contains("world")) {
    const auto& w = j.at("world");
    const std::string s = "world.";
    read(w, "size_m", c.world_size_m, s);
    read(w, "cell_size", c.cell_size, s);
    read(w, "resolution", c.resolution, s);
    read(w, "hfov_deg", c.hfov_deg, s);
    read(w, "max_steps", c.max_steps, s);
    read(w, "success_radius", c.success_radius, s);
    read(w, "forward_step", c.motion.forward_step, s);
    read(w, "turn_deg", c.motion.turn_deg, s);
    read(w, "clearance", c.motion.clearance, s);
    if (w.contains("bands")) {
      c.bands.clear();
      for (const auto& b : w.at("bands")) {
        world::DifficultyBand band;
        read(b, "name", band.name, "world.bands.");
        read(b, "min_d", band.min_d, "world.bands.");
        read(b, "max_d", band.max_d, "world.bands.");
        c.bands.push_back(band);
      }
    }
    if (w.contains("train_world_seeds")) c.train_world_seeds = seeds(w.at("train_world_seeds"), "world.train_world_seeds");
    if (w.contains("heldout_world_seeds"))
      c.heldout_world_seeds = seeds(w.at("heldout_world_seeds"), "world.heldout_world_seeds");
  }
  if (j.contains("episodes")) {
    const auto& e = j.at("episodes");
    read(e, "train", c.train_episodes, "episodes.");
    read(e, "heldout", c.heldout_episodes, "episodes.");
    read(e, "probe", c.probe_episodes, "episodes.");
    read(e, "probe_count", c.probe_count, "episodes.");
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    read(e, "greedy", c.eval_greedy, "eval.");
    read(e, "seed", c.eval_seed, "eval.");
    read(e, "num_workers", c.eval_workers, "eval.");
    read(e, "count_collided_moves", c.count_collided_moves, "eval.");
  }
  c.train.seed = c.seed;
  c.model.fusion.resolution = c.resolution;
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigurationError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigurationError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigurationError("override '" + assignment + "' has an empty key segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = nlohmann::json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigurationError("override '" + assignment + "' descends into a non-object");
    start = dot + 1;
  }
}

std::string config_hash(const RunConfig& cfg) {
  nlohmann::json j = to_json(cfg);
  j.erase("output_dir");
  j["train"].erase("num_workers");
  j["train"].erase("stop_after_updates");
  j["eval"].erase("num_workers");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path resolve_output(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("GOALNAV_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / p;
  }
  return p;
}

}  // namespace goalnav::cli

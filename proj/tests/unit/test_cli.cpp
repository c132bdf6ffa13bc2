#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "goalnav/cli/commands.hpp"

using namespace goalnav;
using namespace goalnav::cli;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("goalnav_test_cli_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const nlohmann::json& j) {
  try {
    run_config_from_json(j);
  } catch (const nn::ConfigurationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("run config round-trips through JSON") {
  const auto cfg = default_run_config();
  CHECK(cfg.train_world_seeds.size() == 20);
  CHECK(cfg.heldout_world_seeds.size() == 10);
  const auto j = to_json(cfg);
  CHECK(to_json(run_config_from_json(j)) == j);
  CHECK(config_hash(run_config_from_json(j)) == config_hash(cfg));
}

TEST_CASE("config errors name the field") {
  CHECK(error_of({{"fusion", {{"mechanism", "bogus"}}}}).find("mechanism") != std::string::npos);
  CHECK(error_of({{"trian", {}}}).find("trian") != std::string::npos);
  CHECK(error_of({{"train", {{"lr", "fast"}}}}).find("lr") != std::string::npos);
  CHECK(error_of({{"world", {{"train_world_seeds", {1, 2}}, {"heldout_world_seeds", {2, 3}}}}}) != "");
}

TEST_CASE("config hash ignores output and worker settings only") {
  const auto base = default_run_config();
  const auto h = config_hash(base);
  CHECK(h.size() == 16);
  auto c = base;
  c.output_dir = "x/y";
  c.train.num_workers = 3;
  c.eval_workers = 5;
  c.train.stop_after_updates = 2;
  CHECK(config_hash(c) == h);
  c.train.lr *= 2;
  CHECK(config_hash(c) != h);
  c = base;
  c.model.fusion.mid_depth = 2;
  CHECK(config_hash(c) != h);
}

TEST_CASE("overrides parse JSON values and fall back to strings") {
  auto j = to_json(default_run_config());
  apply_override(j, "train.lr=0.001");
  apply_override(j, "fusion.mechanism=EARLY");
  apply_override(j, "fusion.modeling=JOINT");
  apply_override(j, "world.train_world_seeds=[1,2,3]");
  const auto c = run_config_from_json(j);
  CHECK(c.train.lr == 0.001);
  CHECK(c.model.fusion.mechanism == fusion::Mechanism::kEarly);
  CHECK(c.train_world_seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), nn::ConfigurationError);
}

TEST_CASE("gen-episodes is deterministic and splits are disjoint") {
  const auto dir = scratch("episodes");
  auto cfg = default_run_config();
  cfg.resolution = 16;
  cfg.model.fusion.resolution = 16;
  const auto a = cmd_gen_episodes(cfg, 6, Split::kTrain, dir / "a.jsonl");
  cmd_gen_episodes(cfg, 6, Split::kTrain, dir / "b.jsonl");
  const auto h = cmd_gen_episodes(cfg, 6, Split::kHeldout, dir / "h.jsonl");
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  const std::set<std::uint64_t> train(cfg.train_world_seeds.begin(), cfg.train_world_seeds.end());
  for (const auto& ep : a) CHECK(train.count(ep.world_seed) == 1);
  for (const auto& ep : h) CHECK(train.count(ep.world_seed) == 0);
  CHECK_THROWS(parse_split("validation"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("ablation axes enumerate their variants") {
  const auto base = default_run_config();
  CHECK(ablation_variants(base, AblationAxis::kMechanism).size() == 4);
  CHECK(ablation_variants(base, AblationAxis::kMidMapping).size() == 2);
  CHECK(ablation_variants(base, AblationAxis::kMidDepth).size() == 3);
  CHECK(ablation_variants(base, AblationAxis::kEarlyConcat).size() == 3);
  CHECK(ablation_variants(base, AblationAxis::kModeling).size() == 3);
  std::set<std::string> hashes;
  for (const auto& v : ablation_variants(base, AblationAxis::kMidDepth)) {
    CHECK(v.config.model.fusion.mechanism == fusion::Mechanism::kMid);
    hashes.insert(config_hash(v.config));
  }
  CHECK(hashes.size() == 3);
  CHECK(parse_axis("mid_depth") == AblationAxis::kMidDepth);
  CHECK_THROWS(parse_axis("learning_rate"));
}

TEST_CASE("eval refuses a missing checkpoint") {
  const auto dir = scratch("eval");
  CHECK_THROWS(cmd_eval(dir / "none.ckpt", dir / "none.jsonl", dir / "r.json"));
  std::filesystem::remove_all(dir);
}

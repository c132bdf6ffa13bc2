#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "goalnav/cli/commands.hpp"

using namespace goalnav;

namespace {

cli::RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw nn::ConfigurationError(path + ": " + e.what());
    }
  }
  for (const auto& o : overrides) cli::apply_override(j, o);
  return cli::run_config_from_json(j);
}

std::vector<int> parse_timesteps(const std::string& s) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto part = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!part.empty()) out.push_back(std::stoi(part));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw nn::ConfigurationError("field 'timesteps' is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image-goal navigation with goal prompting: episodes, training, evaluation, ablations"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto config_opts = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Run config (JSON)");
    sub->add_option("--set", overrides, "Override a setting, e.g. --set train.total_steps=2048");
  };

  auto* gen = app.add_subcommand("gen-episodes", "Write a JSONL episode set");
  config_opts(gen);
  std::string split = "heldout", out;
  int count = 100;
  gen->add_option("--split", split, "train or heldout")->required();
  gen->add_option("--count", count, "Number of episodes");
  gen->add_option("-o,--out", out, "Output file")->required();

  auto* train = app.add_subcommand("train", "Train a policy with PPO");
  config_opts(train);
  bool resume = false;
  train->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on an episode set");
  std::string checkpoint, episodes, report;
  int workers = 1;
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--episodes", episodes)->required();
  eval->add_option("-o,--out", report, "Report path (JSON)");
  eval->add_option("--workers", workers);

  auto* ablate = app.add_subcommand("ablate", "Train and compare the variants of one fusion axis");
  config_opts(ablate);
  std::string axis, table = "ablation.csv";
  int seeds = 3;
  long budget = 0;
  ablate->add_option("--axis", axis, "mechanism | mid_mapping | mid_depth | early_concat | modeling")->required();
  ablate->add_option("--seeds", seeds);
  ablate->add_option("--budget", budget, "Environment steps per run (0 keeps train.total_steps)");
  ablate->add_option("-o,--out", table, "Comparison table (CSV)");

  auto* vis = app.add_subcommand("visualize", "EigenCAM panels and a trajectory map for one episode");
  int episode_id = 0;
  std::string timesteps = "0", out_dir = "panels";
  vis->add_option("--checkpoint", checkpoint)->required();
  vis->add_option("--episodes", episodes)->required();
  vis->add_option("--episode-id", episode_id)->required();
  vis->add_option("--timesteps", timesteps, "Comma-separated step indices");
  vis->add_option("-o,--out", out_dir);

  auto* kps = app.add_subcommand("keypoints", "Draw goal/observation keypoint matches at an episode start");
  config_opts(kps);
  kps->add_option("--episodes", episodes)->required();
  kps->add_option("--episode-id", episode_id)->required();
  kps->add_option("-o,--out", out)->required();

  auto* show = app.add_subcommand("config", "Print the resolved config and its hash");
  config_opts(show);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto cfg = resolve_config(config_path, overrides);
      const auto eps = cli::cmd_gen_episodes(cfg, count, cli::parse_split(split), out);
      std::cout << "wrote " << eps.size() << " episodes to " << out << '\n';
    } else if (*train) {
      const auto cfg = resolve_config(config_path, overrides);
      std::cout << "config_hash " << cli::config_hash(cfg) << '\n';
      const auto r = cli::cmd_train(cfg, resume);
      std::cout << "trained " << r.steps << " steps in " << r.updates << " updates\n"
                << "checkpoint " << r.checkpoint.string() << "\nmetrics " << r.metrics.string() << '\n';
    } else if (*eval) {
      const auto rep = cli::cmd_eval(checkpoint, episodes, report, workers);
      std::cout << rep.at("aggregate").dump(2) << '\n';
    } else if (*ablate) {
      const auto cfg = resolve_config(config_path, overrides);
      const auto rows = cli::cmd_ablate(cfg, cli::parse_axis(axis), seeds, budget, table);
      int failed = 0;
      for (const auto& r : rows) failed += r.error.empty() ? 0 : 1;
      std::cout << "wrote " << table << " (" << rows.size() << " variants, " << failed << " failed)\n";
      return failed ? 1 : 0;
    } else if (*vis) {
      for (const auto& f : cli::cmd_visualize(checkpoint, episodes, episode_id, parse_timesteps(timesteps), out_dir))
        std::cout << f << '\n';
    } else if (*kps) {
      const auto cfg = resolve_config(config_path, overrides);
      std::cout << cli::cmd_keypoints(cfg, episodes, episode_id, out) << '\n';
    } else if (*show) {
      const auto cfg = resolve_config(config_path, overrides);
      std::cout << nlohmann::json{{"config_hash", cli::config_hash(cfg)}, {"config", cli::to_json(cfg)}}.dump(2)
                << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

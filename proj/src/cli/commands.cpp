#include "goalnav/cli/commands.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>

#include "goalnav/io/ppm.hpp"
#include "goalnav/kp/keypoints.hpp"

namespace goalnav::cli {

using nn::ConfigurationError;

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + p.string());
}

world::EpisodeSetSpec episode_spec(const RunConfig& cfg, int count, Split split) {
  world::EpisodeSetSpec s;
  s.world_seeds = split == Split::kTrain ? cfg.train_world_seeds : cfg.heldout_world_seeds;
  s.world_size_m = cfg.world_size_m;
  s.cell_size = cfg.cell_size;
  s.count = count;
  s.bands = cfg.bands;
  s.seed = world::mix_seed(cfg.seed, split == Split::kTrain ? 1 : 2);
  s.camera = cfg.camera();
  return s;
}

std::vector<world::Episode> probe_set(const RunConfig& cfg, world::WorldCache& cache) {
  if (!cfg.probe_episodes.empty()) return world::read_episodes(cfg.probe_episodes, cache, cfg.camera());
  if (cfg.probe_count == 0) return {};
  auto spec = episode_spec(cfg, cfg.probe_count, Split::kHeldout);
  spec.seed = world::mix_seed(cfg.seed, 3);
  return world::generate_episodes(spec, cache);
}

struct LoadedModel {
  RunConfig config;
  std::string hash;
  std::unique_ptr<policy::NavModel<float>> model;
};

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  if (!std::filesystem::exists(checkpoint)) throw std::runtime_error("checkpoint not found: " + checkpoint.string());
  const nn::Checkpoint ckpt = nn::read_checkpoint(checkpoint);
  if (!ckpt.meta.contains("run")) throw std::runtime_error("checkpoint carries no run configuration");
  LoadedModel m;
  m.config = run_config_from_json(ckpt.meta.at("run"));
  m.hash = config_hash(m.config);
  if (m.hash != ckpt.config_hash)
    throw std::runtime_error("checkpoint config hash " + ckpt.config_hash + " does not match its stored config (" +
                             m.hash + ")");
  m.model = std::make_unique<policy::NavModel<float>>(m.config.model, 0);
  nn::load_parameters(ckpt, m.model->params(), "model.");
  return m;
}

const world::Episode& find_episode(const std::vector<world::Episode>& eps, int id) {
  for (const auto& e : eps)
    if (e.id == id) return e;
  throw world::UsageError("episode id " + std::to_string(id) + " is not in the episode file");
}

}  // namespace

Split parse_split(const std::string& s) {
  const auto v = lower(s);
  if (v == "train") return Split::kTrain;
  if (v == "heldout" || v == "held_out") return Split::kHeldout;
  throw ConfigurationError("field 'split' must be train or heldout, got '" + s + "'");
}

std::vector<world::Episode> cmd_gen_episodes(const RunConfig& cfg, int count, Split split,
                                             const std::filesystem::path& out) {
  validate(cfg);
  if (count < 1) throw ConfigurationError("field 'count' must be positive");
  world::WorldCache cache;
  const auto eps = world::generate_episodes(episode_spec(cfg, count, split), cache);
  ensure_parent(out);
  world::write_episodes(out.string(), eps);
  return eps;
}

TrainOutcome cmd_train(const RunConfig& cfg, bool resume) {
  validate(cfg);
  const auto out = resolve_output(cfg.output_dir);
  std::filesystem::create_directories(out);
  auto cache = std::make_shared<world::WorldCache>();
  train::TrainerSetup setup;
  setup.model = cfg.model;
  setup.train = cfg.train;
  setup.world = cfg.world_config();
  setup.probe_episodes = probe_set(cfg, *cache);
  setup.output_dir = out;
  setup.config_hash = config_hash(cfg);
  setup.extra_meta = to_json(cfg);
  write_json(out / "config.json", {{"config_hash", setup.config_hash}, {"config", to_json(cfg)}});

  train::Trainer trainer(std::move(setup), cache);
  if (resume) trainer.resume(trainer.checkpoint_path());
  trainer.run();
  return {trainer.checkpoint_path(), trainer.metrics_path(), trainer.updates_done(), trainer.steps_done()};
}

nlohmann::json cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& episodes,
                        const std::filesystem::path& report_out, int num_workers) {
  const auto m = load_model(checkpoint);
  world::WorldCache cache;
  const auto eps = world::read_episodes(episodes.string(), cache, m.config.camera());
  if (eps.empty()) throw eval::EvaluationError("episode file " + episodes.string() + " is empty");
  eval::EvalOptions opts;
  opts.greedy = m.config.eval_greedy;
  opts.seed = m.config.eval_seed;
  opts.num_workers = std::max(1, num_workers);
  opts.env = m.config.env_spec();
  opts.run.max_steps = m.config.max_steps;
  opts.run.count_collided_moves = m.config.count_collided_moves;
  const auto results = eval::evaluate(*m.model, eps, cache, opts);
  const auto report = eval::make_report(results, m.hash,
                                        {{"checkpoint", checkpoint.string()},
                                         {"episodes", episodes.string()},
                                         {"mechanism", fusion::to_string(m.config.model.fusion.mechanism)}});
  if (!report_out.empty()) write_json(report_out, report);
  return report;
}

AblationAxis parse_axis(const std::string& s) {
  const auto v = lower(s);
  if (v == "mechanism") return AblationAxis::kMechanism;
  if (v == "mid_mapping") return AblationAxis::kMidMapping;
  if (v == "mid_depth") return AblationAxis::kMidDepth;
  if (v == "early_concat") return AblationAxis::kEarlyConcat;
  if (v == "modeling") return AblationAxis::kModeling;
  throw ConfigurationError("field 'axis' must be one of mechanism, mid_mapping, mid_depth, early_concat, modeling; got '" +
                           s + "'");
}

std::vector<Variant> ablation_variants(const RunConfig& base, AblationAxis axis) {
  using fusion::Mechanism;
  std::vector<Variant> out;
  auto with = [&](const std::string& name, auto edit) {
    RunConfig c = base;
    edit(c.model.fusion);
    out.push_back({name, c});
  };
  auto as = [](Mechanism m) {
    return [m](fusion::FusionConfig& f) {
      f.mechanism = m;
      f.modeling = fusion::default_modeling(m);
    };
  };
  switch (axis) {
    case AblationAxis::kMechanism:
      for (Mechanism m : {Mechanism::kLate, Mechanism::kSkip, Mechanism::kMid, Mechanism::kEarly})
        with(std::string(fusion::to_string(m)), as(m));
      break;
    case AblationAxis::kMidMapping:
      for (auto mm : {fusion::MidMapping::kFgHr, fusion::MidMapping::kSemantic})
        with(std::string(fusion::to_string(mm)), [&](fusion::FusionConfig& f) {
          as(Mechanism::kMid)(f);
          f.mid_mapping = mm;
        });
      break;
    case AblationAxis::kMidDepth:
      for (int d : {1, 2, 4})
        with("depth" + std::to_string(d), [&](fusion::FusionConfig& f) {
          as(Mechanism::kMid)(f);
          f.mid_depth = d;
        });
      break;
    case AblationAxis::kEarlyConcat:
      for (auto ec : {fusion::EarlyConcat::kStack3d, fusion::EarlyConcat::kEdge, fusion::EarlyConcat::kChannel})
        with(std::string(fusion::to_string(ec)), [&](fusion::FusionConfig& f) {
          as(Mechanism::kEarly)(f);
          f.early_concat = ec;
        });
      break;
    case AblationAxis::kModeling:
      with("SEPARATE", [&](fusion::FusionConfig& f) {
        f.mechanism = Mechanism::kLate;
        f.modeling = fusion::Modeling::kSeparate;
      });
      with("TIED", [&](fusion::FusionConfig& f) {
        f.mechanism = Mechanism::kLate;
        f.modeling = fusion::Modeling::kTied;
      });
      with("JOINT", as(Mechanism::kEarly));
      break;
  }
  return out;
}

namespace {

std::string axis_name(AblationAxis a) {
  switch (a) {
    case AblationAxis::kMechanism: return "mechanism";
    case AblationAxis::kMidMapping: return "mid_mapping";
    case AblationAxis::kMidDepth: return "mid_depth";
    case AblationAxis::kEarlyConcat: return "early_concat";
    case AblationAxis::kModeling: return "modeling";
  }
  return "?";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<VariantResult>& rows, int seeds) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "variant";
  for (int s = 0; s < seeds; ++s) out << ",sr_seed" << s << ",spl_seed" << s;
  out << ",mean_sr,mean_spl,status,config_hash\n";
  for (const auto& r : rows) {
    out << r.name;
    for (int s = 0; s < seeds; ++s) {
      if (s < static_cast<int>(r.sr.size())) out << ',' << fmt(r.sr[s]) << ',' << fmt(r.spl[s]);
      else out << ",,";
    }
    const bool ok = r.error.empty();
    out << ',' << (ok ? fmt(mean(r.sr)) : "") << ',' << (ok ? fmt(mean(r.spl)) : "") << ',';
    if (ok) {
      out << "ok";
    } else {
      std::string e = r.error;
      std::replace(e.begin(), e.end(), '"', '\'');
      out << "\"failed: " << e << '"';
    }
    out << ',' << r.config_hash << '\n';
  }
}

}  // namespace

std::vector<VariantResult> cmd_ablate(const RunConfig& base, AblationAxis axis, int seeds, long budget,
                                      const std::filesystem::path& csv_out) {
  if (seeds < 1) throw ConfigurationError("field 'seeds' must be positive");
  const std::string axis_dir = "ablate_" + axis_name(axis);
  const auto root = resolve_output(base.output_dir) / axis_dir;
  std::filesystem::create_directories(root);

  std::filesystem::path heldout = base.heldout_episodes;
  if (heldout.empty()) {
    heldout = root / "heldout.jsonl";
    cmd_gen_episodes(base, 200, Split::kHeldout, heldout);
  }

  std::vector<VariantResult> rows;
  for (const auto& v : ablation_variants(base, axis)) {
    VariantResult r;
    r.name = v.name;
    try {
      for (int s = 0; s < seeds; ++s) {
        RunConfig c = v.config;
        c.seed = base.seed + static_cast<std::uint64_t>(s);
        c.train.seed = c.seed;
        if (budget > 0) c.train.total_steps = budget;
        c.output_dir = (root / v.name / ("seed" + std::to_string(s))).string();
        c.heldout_episodes = heldout.string();
        if (s == 0) r.config_hash = config_hash(c);
        std::cerr << "[ablate] " << axis_name(axis) << '=' << v.name << " seed " << s << '\n';
        const auto trained = cmd_train(c);
        const auto report = cmd_eval(trained.checkpoint, heldout,
                                     resolve_output(c.output_dir) / "report.json", c.eval_workers);
        r.sr.push_back(report.at("aggregate").at("success_rate").get<double>());
        r.spl.push_back(report.at("aggregate").at("spl").get<double>());
      }
    } catch (const std::exception& e) {
      r.error = e.what();
      std::cerr << "[ablate] variant " << v.name << " failed: " << e.what() << '\n';
    }
    rows.push_back(r);
    write_ablation_csv(csv_out, rows, seeds);
  }
  return rows;
}

std::vector<std::string> cmd_visualize(const std::filesystem::path& checkpoint,
                                       const std::filesystem::path& episodes, int episode_id,
                                       const std::vector<int>& timesteps, const std::filesystem::path& out_dir) {
  const auto m = load_model(checkpoint);
  world::WorldCache cache;
  const auto eps = world::read_episodes(episodes.string(), cache, m.config.camera());
  const auto& ep = find_episode(eps, episode_id);
  const auto env_spec = m.config.env_spec();
  std::filesystem::create_directories(out_dir);
  auto files =
      eval::export_cam_panels(*m.model, ep, cache, env_spec, timesteps, out_dir.string(), m.hash, m.config.max_steps);

  world::NavEnv env(env_spec);
  eval::ModelController ctl(*m.model, true);
  eval::RunOptions opts;
  opts.max_steps = m.config.max_steps;
  opts.record_trajectory = true;
  const auto r = eval::run_episode(env, cache.get(ep), ep, ctl, opts);
  const auto map = eval::trajectory_map(*cache.get(ep), ep, r.trajectory);
  const auto path = (out_dir / ("trajectory_ep" + std::to_string(ep.id) + ".ppm")).string();
  io::write_ppm(path, map, "config_hash " + m.hash);
  files.push_back(path);
  return files;
}

std::string cmd_keypoints(const RunConfig& cfg, const std::filesystem::path& episodes, int episode_id,
                          const std::filesystem::path& out) {
  world::WorldCache cache;
  const auto eps = world::read_episodes(episodes.string(), cache, cfg.camera());
  const auto& ep = find_episode(eps, episode_id);
  world::NavEnv env(cfg.env_spec());
  env.reset(cache.get(ep), ep);
  const int max_points = cfg.model.fusion.skip_max_points;
  const auto a = kp::detect(env.observation(), max_points);
  const auto b = kp::detect(ep.goal_image, max_points);
  const auto img = kp::draw_matches(env.observation(), ep.goal_image, kp::match(a, b));
  ensure_parent(out);
  io::write_ppm(out.string(), img, "config_hash " + config_hash(cfg));
  return out.string();
}

RunConfig config_from_checkpoint(const std::filesystem::path& checkpoint) { return load_model(checkpoint).config; }

}  // namespace goalnav::cli

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "goalnav/cli/commands.hpp"
#include "goalnav/world/geodesic.hpp"

namespace py = pybind11;
using namespace goalnav;

namespace {

cli::RunConfig parse(const std::string& json_text) {
  return cli::run_config_from_json(nlohmann::json::parse(json_text));
}

py::array_t<float> to_array(const world::RGBImage& img) {
  py::array_t<float> out({img.height, img.width, 3});
  auto v = out.mutable_unchecked<3>();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) v(y, x, c) = img.at(c, y, x);
  return out;
}

py::array_t<bool> occupancy(const world::OccupancyGrid& g) {
  py::array_t<bool> out({g.height(), g.width()});
  auto v = out.mutable_unchecked<2>();
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) v(y, x) = g.occupied(x, y);
  return out;
}

}  // namespace

PYBIND11_MODULE(_goalnav, m) {
  m.doc() = "Image-goal navigation core";

  py::register_exception<nn::ConfigurationError>(m, "ConfigurationError", PyExc_ValueError);
  py::register_exception<world::UsageError>(m, "UsageError", PyExc_ValueError);

  m.def("default_config", [] { return cli::to_json(cli::default_run_config()).dump(); });
  m.def("normalize_config", [](const std::string& j) { return cli::to_json(parse(j)).dump(); });
  m.def("config_hash", [](const std::string& j) { return cli::config_hash(parse(j)); });

  m.def("world_occupancy", [](std::uint64_t seed, double size_m, double cell_size) {
    return occupancy(world::generate_world(seed, size_m, cell_size));
  }, py::arg("seed"), py::arg("size_m") = 10.0, py::arg("cell_size") = 0.25);

  m.def("render", [](std::uint64_t seed, double x, double y, double theta, int resolution, double size_m) {
    const auto g = world::generate_world(seed, size_m);
    return to_array(world::render(g, {x, y, theta}, {90.0, resolution}));
  }, py::arg("seed"), py::arg("x"), py::arg("y"), py::arg("theta"), py::arg("resolution") = 64,
     py::arg("size_m") = 10.0);

  m.def("geodesic_distance", [](std::uint64_t seed, std::array<double, 2> a, std::array<double, 2> b,
                                double size_m) {
    const auto g = world::generate_world(seed, size_m);
    return world::geodesic_distance(g, {a[0], a[1], 0.0}, {b[0], b[1], 0.0});
  }, py::arg("seed"), py::arg("a"), py::arg("b"), py::arg("size_m") = 10.0);

  m.def("gae", [](std::vector<double> r, std::vector<double> v, std::vector<bool> dones, double bootstrap,
                  double gamma, double lambda) {
    if (r.size() != v.size() || r.size() != dones.size()) throw std::invalid_argument("gae: length mismatch");
    const std::vector<char> d(dones.begin(), dones.end());
    const auto g = train::gae(r, v, d, bootstrap, gamma, lambda);
    return std::make_pair(g.advantages, g.returns);
  }, py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("bootstrap"), py::arg("gamma") = 0.99,
     py::arg("lam") = 0.95);

  m.def("gen_episodes", [](const std::string& cfg, int count, const std::string& split,
                           const std::filesystem::path& out) {
    return cli::cmd_gen_episodes(parse(cfg), count, cli::parse_split(split), out).size();
  });

  m.def("train", [](const std::string& cfg, bool resume) {
    cli::TrainOutcome r;
    {
      py::gil_scoped_release release;
      r = cli::cmd_train(parse(cfg), resume);
    }
    py::dict d;
    d["checkpoint"] = r.checkpoint.string();
    d["metrics"] = r.metrics.string();
    d["updates"] = r.updates;
    d["steps"] = r.steps;
    return d;
  }, py::arg("config"), py::arg("resume") = false);

  m.def("evaluate", [](const std::filesystem::path& ckpt, const std::filesystem::path& episodes,
                       const std::filesystem::path& report, int workers) {
    nlohmann::json j;
    {
      py::gil_scoped_release release;
      j = cli::cmd_eval(ckpt, episodes, report, workers);
    }
    return j.dump();
  }, py::arg("checkpoint"), py::arg("episodes"), py::arg("report"), py::arg("workers") = 1);

  m.def("param_count", [](const std::string& cfg) {
    policy::NavModel<float> model(parse(cfg).model, 0);
    return model.params().scalar_count();
  });
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "goalnav/fusion/eigencam.hpp"
#include "goalnav/fusion/encoder.hpp"
#include "goalnav/world/episode.hpp"

using namespace goalnav;
using namespace goalnav::fusion;
using nn::ParameterSet;
using nn::Tensor;
using nn::TensorD;
using nn::Var;

namespace {

FusionConfig slim(Mechanism m, int resolution = 32) {
  FusionConfig cfg;
  cfg.mechanism = m;
  cfg.modeling = default_modeling(m);
  cfg.backbone = cfg.backbone.slimmed(8);
  cfg.resolution = resolution;
  cfg.skip_k = 4;
  cfg.skip_hidden = 8;
  return cfg;
}

template <typename T>
Var<T> random_images(std::size_t n, int res, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  nn::BasicTensor<T> t({n, 3, static_cast<std::size_t>(res), static_cast<std::size_t>(res)});
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return nn::constant(std::move(t));
}

template <typename T>
Var<T> minus_ones(std::size_t n, int k) {
  return nn::constant(nn::BasicTensor<T>({n, static_cast<std::size_t>(4 * k)}, T(-1)));
}

template <typename T>
double max_abs_diff(const nn::BasicTensor<T>& a, const nn::BasicTensor<T>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

template <typename T>
void randomize_film(ParameterSet<T>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& p : params.items())
    if (p.name.find(".film") != std::string::npos)
      for (auto& v : const_cast<Var<T>&>(p.var).mutable_value().data()) v += static_cast<T>(g(rng));
}

std::vector<FusionConfig> all_variants(int res = 32) {
  std::vector<FusionConfig> out;
  out.push_back(slim(Mechanism::kLate, res));
  auto tied = slim(Mechanism::kLate, res);
  tied.modeling = Modeling::kTied;
  out.push_back(tied);
  for (auto c : {EarlyConcat::kChannel, EarlyConcat::kEdge, EarlyConcat::kStack3d}) {
    auto e = slim(Mechanism::kEarly, res);
    e.early_concat = c;
    out.push_back(e);
  }
  for (auto m : {MidMapping::kFgHr, MidMapping::kSemantic})
    for (int d : {1, 2, 4}) {
      auto cfg = slim(Mechanism::kMid, res);
      cfg.mid_mapping = m;
      cfg.mid_depth = d;
      out.push_back(cfg);
    }
  out.push_back(slim(Mechanism::kSkip, res));
  return out;
}

}  // namespace

TEST_CASE("every mechanism yields an embed_dim vector") {
  for (const auto& cfg : all_variants()) {
    ParameterSet<float> params;
    nn::Rng rng(1);
    FusionEncoder<float> enc(params, cfg, rng);
    const auto z = enc.forward(random_images<float>(2, 32, 3), random_images<float>(2, 32, 4), minus_ones<float>(2, 4));
    CHECK(z.shape() == nn::Shape{2, static_cast<std::size_t>(cfg.backbone.embed_dim)});
    for (float v : z.value().data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("backbone downsampling schedule") {
  ParameterSet<float> params;
  nn::Rng rng(0);
  const BackboneSpec spec;
  Backbone<float> bb(params, "bb", spec, 3, 64, 64, rng);
  CHECK(bb.block_shape(0) == nn::Shape{32, 16, 16});
  CHECK(bb.block_shape(1) == nn::Shape{64, 8, 8});
  CHECK(bb.block_shape(2) == nn::Shape{128, 4, 4});
  CHECK(bb.block_shape(3) == nn::Shape{128, 4, 4});
  CHECK(bb.embed_dim() == 512);
  CHECK(bb.num_blocks() == 4);
  FusionConfig bad;
  bad.backbone.blocks.pop_back();
  CHECK_THROWS_AS(validate(bad), nn::ConfigurationError);
}

TEST_CASE("LATE weight tying") {
  auto cfg = slim(Mechanism::kLate);
  const auto v = random_images<float>(1, 32, 7);
  {
    cfg.modeling = Modeling::kTied;
    ParameterSet<float> params;
    nn::Rng rng(2);
    FusionEncoder<float> enc(params, cfg, rng);
    CHECK(enc.observation_embedding(v).value() == enc.goal_embedding(v).value());
  }
  {
    cfg.modeling = Modeling::kSeparate;
    ParameterSet<float> params;
    nn::Rng rng(2);
    FusionEncoder<float> enc(params, cfg, rng);
    CHECK(max_abs_diff(enc.observation_embedding(v).value(), enc.goal_embedding(v).value()) > 1e-4);
  }
  ParameterSet<float> params;
  nn::Rng rng(2);
  FusionEncoder<float> enc(params, cfg, rng);
  CHECK_THROWS_AS(enc.forward(random_images<float>(1, 32, 1), random_images<float>(1, 16, 1)), nn::ConfigurationError);
}

TEST_CASE("EARLY input layouts") {
  const auto o = random_images<float>(2, 64, 1), g = random_images<float>(2, 64, 2);
  {
    ParameterSet<float> params;
    nn::Rng rng(0);
    auto cfg = slim(Mechanism::kEarly, 128);
    FusionEncoder<float> enc(params, cfg, rng);
    CHECK(enc.early_input(random_images<float>(1, 128, 1), random_images<float>(1, 128, 2)).shape() ==
          nn::Shape{1, 6, 128, 128});
  }
  auto cfg = slim(Mechanism::kEarly, 64);
  {
    ParameterSet<float> params;
    nn::Rng rng(0);
    FusionEncoder<float> enc(params, cfg, rng);
    const auto x = enc.early_input(o, g);
    CHECK(x.shape() == nn::Shape{2, 6, 64, 64});
    // Observation channels first, then goal channels.
    CHECK(x.value()[(1 * 6 + 0) * 4096 + 5] == o.value()[(1 * 3 + 0) * 4096 + 5]);
    CHECK(x.value()[(1 * 6 + 4) * 4096 + 9] == g.value()[(1 * 3 + 1) * 4096 + 9]);
  }
  {
    cfg.early_concat = EarlyConcat::kEdge;
    ParameterSet<float> params;
    nn::Rng rng(0);
    FusionEncoder<float> enc(params, cfg, rng);
    const auto x = enc.early_input(o, g);
    CHECK(x.shape() == nn::Shape{2, 3, 64, 128});
    CHECK(x.value()[((1 * 3 + 2) * 64 + 10) * 128 + 3] == o.value()[((1 * 3 + 2) * 64 + 10) * 64 + 3]);
    CHECK(x.value()[((1 * 3 + 2) * 64 + 10) * 128 + 64 + 3] == g.value()[((1 * 3 + 2) * 64 + 10) * 64 + 3]);
  }
  {
    cfg.early_concat = EarlyConcat::kStack3d;
    ParameterSet<float> params;
    nn::Rng rng(0);
    FusionEncoder<float> enc(params, cfg, rng);
    CHECK(enc.early_input(o, g).shape() == nn::Shape{2, 2, 3, 64, 64});
  }
}

TEST_CASE("EARLY encoding is deterministic and finite") {
  for (auto c : {EarlyConcat::kChannel, EarlyConcat::kEdge, EarlyConcat::kStack3d}) {
    auto cfg = slim(Mechanism::kEarly);
    cfg.early_concat = c;
    ParameterSet<float> params;
    nn::Rng rng(5);
    FusionEncoder<float> enc(params, cfg, rng);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const auto v = random_images<float>(1, 32, s);
      const auto a = enc.encode_early(v, v), b = enc.encode_early(v, v);
      CHECK(a.value() == b.value());
      for (float x : a.value().data()) CHECK(std::isfinite(x));
    }
  }
}

TEST_CASE("FiLM mappings: shapes and identity initialisation") {
  ParameterSet<float> params;
  nn::Rng rng(0);
  const FilmMapping<float> fg(params, "fg", 16, MidMapping::kFgHr), sem(params, "sem", 16, MidMapping::kSemantic);
  for (std::size_t hw : {4u, 7u, 16u}) {
    nn::Tensor z({2, 16, hw, hw});
    std::mt19937_64 r(hw);
    for (auto& v : z.data()) v = std::uniform_real_distribution<float>(-1, 1)(r);
    const auto zf = nn::constant(z);
    const auto a = fg(zf), b = sem(zf);
    CHECK(a.gamma.shape() == nn::Shape{2, 16, hw, hw});
    CHECK(a.beta.shape() == nn::Shape{2, 16, hw, hw});
    CHECK(b.gamma.shape() == nn::Shape{2, 16});
    for (float v : a.gamma.value().data()) CHECK(v == 1.0f);
    for (float v : a.beta.value().data()) CHECK(v == 0.0f);
    for (float v : b.gamma.value().data()) CHECK(v == 1.0f);
    for (float v : b.beta.value().data()) CHECK(v == 0.0f);
  }
}

TEST_CASE("MID with identity mappings equals the unconditioned encoder") {
  for (auto m : {MidMapping::kFgHr, MidMapping::kSemantic})
    for (int d : {1, 2, 4})
      for (auto place : {FilmPlacement::kBeforeResidual, FilmPlacement::kAfterBlock}) {
        auto cfg = slim(Mechanism::kMid);
        cfg.mid_mapping = m;
        cfg.mid_depth = d;
        cfg.film_placement = place;
        ParameterSet<float> params;
        nn::Rng rng(9);
        FusionEncoder<float> enc(params, cfg, rng);
        const auto o = random_images<float>(2, 32, 11), g = random_images<float>(2, 32, 12);
        CHECK(max_abs_diff(enc.encode_mid(o, g).value(), enc.observation_embedding(o).value()) < 1e-6);
        // Depth 0 scaffold: no conditioning at all.
        CHECK(enc.encode_mid(o, g, nullptr, 0).value() == enc.observation_embedding(o).value());
      }
}

TEST_CASE("MID conditioning is live once mappings are non-trivial") {
  for (auto m : {MidMapping::kFgHr, MidMapping::kSemantic}) {
    auto cfg = slim(Mechanism::kMid);
    cfg.mid_mapping = m;
    cfg.mid_depth = 2;
    ParameterSet<float> params;
    nn::Rng rng(4);
    FusionEncoder<float> enc(params, cfg, rng);
    randomize_film(params, 8);
    const auto o = random_images<float>(1, 32, 1);
    const auto z1 = enc.encode_mid(o, random_images<float>(1, 32, 2));
    const auto z2 = enc.encode_mid(o, random_images<float>(1, 32, 3));
    CHECK(max_abs_diff(z1.value(), z2.value()) > 1e-5);
  }
}

TEST_CASE("SKIP keypoint branch") {
  auto cfg = slim(Mechanism::kSkip, 64);
  ParameterSet<float> params;
  nn::Rng rng(3);
  FusionEncoder<float> enc(params, cfg, rng);
  world::RGBImage flat(64, 64);
  std::fill(flat.data.begin(), flat.data.end(), 0.4f);
  const auto zk = keypoint_features(flat, flat, cfg.skip_k, 64);
  REQUIRE(zk.size() == 16);
  for (float v : zk) CHECK(v == -1.0f);
  const auto img = nn::constant(images_to_tensor<float>({&flat}));
  nn::Tensor kpt({1, 16});
  std::copy(zk.begin(), zk.end(), kpt.data().begin());
  const auto z = enc.encode_skip(img, img, nn::constant(kpt));
  CHECK(z.shape() == nn::Shape{1, static_cast<std::size_t>(cfg.backbone.embed_dim)});
  for (float v : z.value().data()) CHECK(std::isfinite(v));

  // v_o == v_g gives diagonal correspondences.
  const auto grid = world::generate_world(3, 10.0);
  const auto [x, y] = grid.center_of(grid.free_cells()[40]);
  const auto view = world::render(grid, {x, y, 0.7});
  const auto self = keypoint_features(view, view, 16, 64);
  int populated = 0;
  for (int i = 0; i < 16; ++i) {
    if (self[4 * i] < 0) continue;
    ++populated;
    CHECK(std::abs(self[4 * i] - self[4 * i + 2]) < 1.5f / 64);
    CHECK(std::abs(self[4 * i + 1] - self[4 * i + 3]) < 1.5f / 64);
  }
  CHECK(populated > 0);
  CHECK_THROWS_AS(enc.encode_skip(img, img, minus_ones<float>(1, 3)), nn::ConfigurationError);
}

TEST_CASE("JOINT early fusion has fewer parameters than SEPARATE late fusion") {
  FusionConfig late, early;
  early.mechanism = Mechanism::kEarly;
  early.modeling = Modeling::kJoint;
  ParameterSet<float> pl, pe;
  nn::Rng r1(0), r2(0);
  FusionEncoder<float> a(pl, late, r1), b(pe, early, r2);
  CHECK(pe.scalar_count() < pl.scalar_count());
}

TEST_CASE("every mechanism back-propagates to the observation stem") {
  for (const auto& cfg : all_variants()) {
    ParameterSet<float> params;
    nn::Rng rng(6);
    FusionEncoder<float> enc(params, cfg, rng);
    if (cfg.mechanism == Mechanism::kMid) randomize_film(params, 1);
    const auto z = enc.forward(random_images<float>(2, 32, 1), random_images<float>(2, 32, 2), minus_ones<float>(2, 4));
    nn::backward(nn::sum(nn::square(z)));
    const auto& w = params.get(enc.observation_backbone().stem_weight_name());
    double norm = 0;
    for (float g : w.grad().data()) norm += g * g;
    CHECK(norm > 0.0);
    if (cfg.mechanism == Mechanism::kMid || (cfg.mechanism != Mechanism::kEarly && cfg.modeling == Modeling::kSeparate)) {
      const auto& wg = params.get(enc.goal_backbone()->stem_weight_name());
      double gn = 0;
      for (float g : wg.grad().data()) gn += g * g;
      CHECK(gn > 0.0);
    }
  }
}

TEST_CASE("fusion encoders pass finite-difference checks in double precision") {
  std::vector<FusionConfig> cfgs;
  for (auto m : {MidMapping::kFgHr, MidMapping::kSemantic}) {
    auto c = slim(Mechanism::kMid, 16);
    c.mid_mapping = m;
    c.mid_depth = 2;
    cfgs.push_back(c);
  }
  auto stack = slim(Mechanism::kEarly, 16);
  stack.early_concat = EarlyConcat::kStack3d;
  cfgs.push_back(stack);
  auto skip = slim(Mechanism::kSkip, 16);
  cfgs.push_back(skip);
  for (const auto& cfg : cfgs) {
    ParameterSet<double> params;
    nn::Rng rng(12);
    FusionEncoder<double> enc(params, cfg, rng);
    if (cfg.mechanism == Mechanism::kMid) randomize_film(params, 2);
    const auto o = random_images<double>(2, 16, 5), g = random_images<double>(2, 16, 6);
    std::mt19937_64 r(1);
    const auto kpt = nn::constant(goalnav::testing::random_tensor({2, 16}, r, 0.0, 1.0));
    auto loss = [&] { return nn::sum(nn::square(enc.forward(o, g, kpt))); };
    std::vector<Var<double>> inputs;
    for (const auto& p : params.items()) inputs.push_back(p.var);
    const auto res = goalnav::testing::check_gradients(loss, inputs, 1e-5, 3, 77, 1e-4);
    CHECK(res.checked > 50);
    CHECK(res.max_rel_error < 1e-3);
  }
}

TEST_CASE("eigencam recovers a rank-1 spatial pattern") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(-1.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t c = 12, h = 6, w = 7;
    std::vector<double> a(c), b(h * w);
    for (auto& v : a) v = s(rng);
    for (auto& v : b) v = u(rng);
    TensorD z({c, h, w});
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t p = 0; p < h * w; ++p) z[i * h * w + p] = a[i] * b[p];
    const auto cam = eigencam(z);
    REQUIRE(cam.shape() == nn::Shape{h, w});
    double mb = 0, mc = 0;
    for (std::size_t p = 0; p < h * w; ++p) {
      mb += b[p];
      mc += cam[p];
      CHECK(cam[p] >= 0.0f);
      CHECK(cam[p] <= 1.0f);
    }
    mb /= h * w;
    mc /= h * w;
    double sbc = 0, sbb = 0, scc = 0;
    for (std::size_t p = 0; p < h * w; ++p) {
      sbc += (b[p] - mb) * (cam[p] - mc);
      sbb += (b[p] - mb) * (b[p] - mb);
      scc += (cam[p] - mc) * (cam[p] - mc);
    }
    CHECK(sbc / std::sqrt(sbb * scc) > 0.999);
  }
}

TEST_CASE("eigencam edge cases") {
  const auto flat = eigencam(Tensor({4, 5, 5}, 3.0f));
  for (float v : flat.data()) CHECK(v == 0.0f);
  const auto zero = eigencam(Tensor({4, 5, 5}));
  for (float v : zero.data()) CHECK(v == 0.0f);
  Tensor bad({2, 2, 2}, 1.0f);
  bad[3] = std::nanf("");
  CHECK_THROWS_AS(eigencam(bad), nn::NumericalError);
  std::mt19937_64 rng(2);
  const auto r = goalnav::testing::random_tensor({8, 9, 9}, rng);
  const auto cam = eigencam(r);
  float lo = 1, hi = 0;
  for (float v : cam.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == 0.0f);
  CHECK(hi == 1.0f);
}

TEST_CASE("fusion config parsing names the bad field") {
  nlohmann::json j = {{"mechanism", "MIDDLE"}};
  try {
    fusion_from_json(j);
    FAIL("expected a ConfigurationError");
  } catch (const nn::ConfigurationError& e) {
    CHECK(std::string(e.what()).find("mechanism") != std::string::npos);
  }
  auto cfg = fusion_from_json({{"mechanism", "early"}, {"early_concat", "stack3d"}});
  CHECK(cfg.mechanism == Mechanism::kEarly);
  CHECK(cfg.modeling == Modeling::kJoint);
  CHECK(cfg.early_concat == EarlyConcat::kStack3d);
  const auto round = fusion_from_json(to_json(cfg));
  CHECK(to_json(round) == to_json(cfg));
  cfg.mid_depth = 3;
  CHECK_THROWS_AS(validate(cfg), nn::ConfigurationError);
  auto bad = slim(Mechanism::kMid);
  bad.modeling = Modeling::kTied;
  CHECK_THROWS_AS(validate(bad), nn::ConfigurationError);
}

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "goalnav/nn/checkpoint.hpp"
#include "goalnav/nn/layers.hpp"
#include "goalnav/nn/ops.hpp"
#include "goalnav/nn/optim.hpp"

using namespace goalnav;
using namespace goalnav::nn;
using goalnav::testing::check_gradients;
using goalnav::testing::random_tensor;

namespace {

// Direct quadruple loop, independent of the im2col path.
TensorD naive_conv(const TensorD& x, const TensorD& w, const TensorD& b, int stride, int pad) {
  const long c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const long o = w.dim(0), k = w.dim(2);
  const long oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  TensorD out({static_cast<std::size_t>(o), static_cast<std::size_t>(oh),
               static_cast<std::size_t>(ow)});
  for (long oc = 0; oc < o; ++oc)
    for (long i = 0; i < oh; ++i)
      for (long j = 0; j < ow; ++j) {
        double acc = b[oc];
        for (long ic = 0; ic < c; ++ic)
          for (long ki = 0; ki < k; ++ki)
            for (long kj = 0; kj < k; ++kj) {
              const long y = i * stride + ki - pad, xx = j * stride + kj - pad;
              if (y < 0 || y >= h || xx < 0 || xx >= wd) continue;
              acc += x[(ic * h + y) * wd + xx] * w[((oc * c + ic) * k + ki) * k + kj];
            }
        out[(oc * oh + i) * ow + j] = acc;
      }
  return out;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Weighted sum with fixed random weights so gradients are not symmetric.
Var<double> probe_loss(const Var<double>& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, constant(random_tensor(out.shape(), rng))));
}

}  // namespace

TEST_CASE("conv2d identity kernel returns input") {
  std::mt19937_64 rng(1);
  Var<float> x(random_tensor({1, 4, 4}, rng).cast<float>());
  Var<float> w(Tensor({1, 1, 1, 1}, 1.0f));
  Var<float> b(Tensor({1}));
  auto y = conv2d(x, w, b, 1, 0);
  CHECK(y.value() == x.value());
}

TEST_CASE("conv2d output shape arithmetic") {
  Var<float> x(Tensor({3, 8, 8}));
  Var<float> w(Tensor({16, 3, 3, 3}));
  Var<float> b(Tensor({16}));
  CHECK(conv2d(x, w, b, 2, 1).shape() == Shape{16, 4, 4});
}

TEST_CASE("conv2d rejects channel mismatch and oversized kernels") {
  Var<float> x(Tensor({2, 5, 5}));
  CHECK_THROWS_AS(conv2d(x, Var<float>(Tensor({1, 3, 3, 3})), Var<float>(), 1, 0),
                  ConfigurationError);
  CHECK_THROWS_AS(conv2d(x, Var<float>(Tensor({1, 2, 7, 7})), Var<float>(), 1, 0),
                  ConfigurationError);
}

TEST_CASE("conv2d matches naive loop for all stride/padding combinations") {
  for (int seed = 0; seed < 12; ++seed) {
    for (int stride : {1, 2}) {
      for (int pad : {0, 1}) {
        std::mt19937_64 rng(seed);
        const auto x = random_tensor({2, 5, 5}, rng);
        const auto w = random_tensor({3, 2, 3, 3}, rng);
        const auto b = random_tensor({3}, rng);
        auto y = conv2d(Var<double>(x), Var<double>(w), Var<double>(b), stride, pad);
        const auto ref = naive_conv(x, w, b, stride, pad);
        REQUIRE(y.shape() == ref.shape());
        CHECK(max_abs_diff(y.value().data(), ref.data()) < 1e-6);
      }
    }
  }
}

TEST_CASE("film_affine identity, annihilation and scalar-loop oracle") {
  std::mt19937_64 rng(3);
  const auto z = random_tensor({4, 3, 3}, rng);
  const auto gamma = random_tensor({4, 3, 3}, rng);
  const auto beta = random_tensor({4, 3, 3}, rng);

  auto ident = film_affine(Var<double>(z), Var<double>(TensorD({4, 3, 3}, 1.0)),
                           Var<double>(TensorD({4, 3, 3}, 0.0)));
  CHECK(ident.value() == z);

  auto ann = film_affine(Var<double>(z), Var<double>(TensorD({4, 3, 3}, 0.0)), Var<double>(beta));
  CHECK(ann.value() == beta);

  auto y = film_affine(Var<double>(z), Var<double>(gamma), Var<double>(beta));
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 9; ++i) {
      const std::size_t k = c * 9 + i;
      CHECK(y.value()[k] == gamma[k] * z[k] + beta[k]);
    }

  // Per-channel factors broadcast over H x W.
  const auto g_c = random_tensor({4}, rng);
  const auto b_c = random_tensor({4}, rng);
  auto ys = film_affine(Var<double>(z), Var<double>(g_c), Var<double>(b_c));
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(ys.value()[c * 9 + i] == g_c[c] * z[c * 9 + i] + b_c[c]);
    }

  CHECK_THROWS_AS(film_affine(Var<double>(z), Var<double>(TensorD({3})), Var<double>(TensorD({3}))),
                  ConfigurationError);
}

TEST_CASE("film_affine with unit gamma and zero beta is identity for random shapes") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  for (int trial = 0; trial < 25; ++trial) {
    const Shape s{dim(rng), dim(rng), dim(rng), dim(rng)};
    const Tensor z = random_tensor(s, rng, -5, 5).cast<float>();
    auto y = film_affine(Var<float>(z), Var<float>(Tensor(s, 1.0f)), Var<float>(Tensor(s, 0.0f)));
    CHECK(y.value() == z);
    const Shape pc{s[0], s[1]};
    auto yc = film_affine(Var<float>(z), Var<float>(Tensor(pc, 1.0f)), Var<float>(Tensor(pc)));
    CHECK(yc.value() == z);
  }
}

TEST_CASE("recurrent_step zero fixed point") {
  ParameterSet<double> params;
  Rng rng(0);
  GruCell<double> cell(params, "gru", 3, 4, rng);
  for (auto& p : params.items()) {
    auto v = p.var;
    v.mutable_value().fill(0.0);
  }
  auto h = recurrent_step(Var<double>(TensorD({1, 4})), Var<double>(TensorD({1, 3})), cell);
  for (double v : h.value().data()) CHECK(v == 0.0);
}

TEST_CASE("recurrent_step matches hand-unrolled gate equations") {
  ParameterSet<double> params;
  Rng rng(5);
  GruCell<double> cell(params, "gru", 3, 4, rng);
  std::mt19937_64 g(9);
  for (auto& p : params.items()) {
    auto v = p.var;
    v.mutable_value() = random_tensor(v.shape(), g);
  }
  const auto h0 = random_tensor({1, 4}, g);
  const auto x = random_tensor({1, 3}, g);
  auto h1 = recurrent_step(Var<double>(h0), Var<double>(x), cell);

  auto affine = [&](const Linear<double>& l, const TensorD& in, std::size_t row) {
    const auto& w = l.weight.value();
    double acc = l.bias.value()[row];
    for (std::size_t j = 0; j < in.size(); ++j) acc += w[row * in.size() + j] * in[j];
    return acc;
  };
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t i = 0; i < 4; ++i) {
    const double r = sig(affine(cell.ir, x, i) + affine(cell.hr, h0, i));
    const double u = sig(affine(cell.iu, x, i) + affine(cell.hu, h0, i));
    const double n = std::tanh(affine(cell.in, x, i) + r * affine(cell.hn, h0, i));
    const double expected = (1 - u) * n + u * h0[i];
    CHECK(std::abs(h1.value()[i] - expected) < 1e-6);
  }

  // Two chained steps equal stepping twice with the intermediate state.
  const auto x2 = random_tensor({1, 3}, g);
  auto chained = recurrent_step(recurrent_step(Var<double>(h0), Var<double>(x), cell),
                                Var<double>(x2), cell);
  auto manual = recurrent_step(Var<double>(h1.value()), Var<double>(x2), cell);
  CHECK(chained.value() == manual.value());
}

TEST_CASE("recurrent_step surfaces non-finite input") {
  ParameterSet<float> params;
  Rng rng(0);
  GruCell<float> cell(params, "gru", 2, 2, rng);
  Tensor bad({1, 2});
  bad[0] = std::nanf("");
  CHECK_THROWS_AS(recurrent_step(Var<float>(Tensor({1, 2})), Var<float>(bad), cell),
                  NumericalError);
}

TEST_CASE("backward power rule, independence and accumulation") {
  Var<double> x(TensorD({1}, 3.0), true);
  Var<double> unused(TensorD({1}, 2.0), true);
  auto loss = square(x);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  CHECK(unused.grad()[0] == 0.0);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(12.0));
  CHECK_THROWS_AS(backward(Var<double>(TensorD({2}), true)), ConfigurationError);
}

TEST_CASE("no-grad mode does not record a tape") {
  Var<float> w(Tensor({1}, 2.0f), true);
  NoGradGuard guard;
  auto y = mul(w, w);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradient check per layer type over random seeds") {
  constexpr double kEps = 1e-3;
  constexpr double kTol = 1e-3;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    CAPTURE(seed);

    SUBCASE("conv2d") {
      for (int stride : {1, 2})
        for (int pad : {0, 1}) {
          Var<double> x(random_tensor({2, 2, 5, 5}, rng), true);
          Var<double> w(random_tensor({3, 2, 3, 3}, rng), true);
          Var<double> b(random_tensor({3}, rng), true);
          auto r = check_gradients(
              [&] { return probe_loss(conv2d(x, w, b, stride, pad), seed); }, {x, w, b}, kEps,
              20, seed);
          CHECK(r.max_rel_error < kTol);
        }
    }
    SUBCASE("conv3d") {
      Var<double> x(random_tensor({1, 2, 2, 5, 5}, rng), true);
      Var<double> w(random_tensor({3, 2, 2, 3, 3}, rng), true);
      Var<double> b(random_tensor({3}, rng), true);
      auto r = check_gradients([&] { return probe_loss(conv3d(x, w, b, 2, 1, 1), seed); },
                               {x, w, b}, kEps, 20, seed);
      CHECK(r.max_rel_error < kTol);
    }
    SUBCASE("group_norm") {
      Var<double> x(random_tensor({2, 4, 3, 3}, rng), true);
      Var<double> g(random_tensor({4}, rng), true);
      Var<double> b(random_tensor({4}, rng), true);
      auto r = check_gradients([&] { return probe_loss(group_norm(x, g, b, 2), seed); },
                               {x, g, b}, kEps, 30, seed);
      CHECK(r.max_rel_error < kTol);
    }
    SUBCASE("linear and activations") {
      Var<double> x(random_tensor({3, 4}, rng), true);
      Var<double> w(random_tensor({5, 4}, rng), true);
      Var<double> b(random_tensor({5}, rng), true);
      auto r = check_gradients(
          [&] {
            auto y = linear(x, w, b);
            return add(add(probe_loss(sigmoid(y), seed), probe_loss(tanh(y), seed + 1)),
                       add(probe_loss(relu(y), seed + 2), probe_loss(exp(scale(y, 0.3)), seed + 3)));
          },
          {x, w, b}, kEps, 20, seed);
      CHECK(r.max_rel_error < kTol);
    }
    SUBCASE("film_affine both modes") {
      Var<double> z(random_tensor({2, 3, 2, 2}, rng), true);
      Var<double> gf(random_tensor({2, 3, 2, 2}, rng), true);
      Var<double> bf(random_tensor({2, 3, 2, 2}, rng), true);
      Var<double> gc(random_tensor({2, 3}, rng), true);
      Var<double> bc(random_tensor({2, 3}, rng), true);
      auto r = check_gradients(
          [&] {
            return add(probe_loss(film_affine(z, gf, bf), seed),
                       probe_loss(film_affine(z, gc, bc), seed + 1));
          },
          {z, gf, bf, gc, bc}, kEps, 20, seed);
      CHECK(r.max_rel_error < kTol);
    }
    SUBCASE("recurrent cell") {
      ParameterSet<double> params;
      Rng init(seed);
      GruCell<double> cell(params, "gru", 3, 4, init);
      Var<double> h(random_tensor({2, 4}, rng), true);
      Var<double> x(random_tensor({2, 3}, rng), true);
      std::vector<Var<double>> inputs{h, x};
      for (const auto& p : params.items()) inputs.push_back(p.var);
      auto r = check_gradients(
          [&] { return probe_loss(recurrent_step(recurrent_step(h, x, cell), x, cell), seed); },
          inputs, kEps, 10, seed);
      CHECK(r.max_rel_error < kTol);
    }
    SUBCASE("log_softmax, pick, clamp, minimum") {
      Var<double> logits(random_tensor({3, 4}, rng), true);
      Var<double> other(random_tensor({3}, rng), true);
      const std::vector<int> idx{0, 3, 1};
      auto r = check_gradients(
          [&] {
            auto lp = pick(log_softmax(logits), idx);
            auto ratio = exp(lp);
            return sum(minimum(mul(ratio, other), mul(clamp(ratio, 0.2, 0.4), other)));
          },
          {logits, other}, kEps, 12, seed);
      CHECK(r.max_rel_error < kTol);
    }
    SUBCASE("structural ops") {
      Var<double> a(random_tensor({2, 3}, rng), true);
      Var<double> b(random_tensor({2, 2}, rng), true);
      Var<double> table(random_tensor({5, 3}, rng), true);
      Var<double> img(random_tensor({2, 2, 3, 3}, rng), true);
      const std::vector<int> idx{4, 0};
      auto r = check_gradients(
          [&] {
            auto cat = concat_cols<double>({a, b, embedding(table, idx)});
            auto rows = concat_rows<double>({cat, slice_rows(cat, 1, 1)});
            auto pooled = global_avg_pool(img);
            auto summed = sum_axis1(reshape(img, {2, 2, 9}));
            return add(add(probe_loss(rows, seed), probe_loss(pooled, seed + 1)),
                       probe_loss(square(summed), seed + 2));
          },
          {a, b, table, img}, kEps, 20, seed);
      CHECK(r.max_rel_error < kTol);
    }
  }
}

TEST_CASE("repeated forward passes are bit-identical") {
  ParameterSet<float> params;
  Rng rng(4);
  Conv2d<float> conv(params, "c", 3, 8, 3, 2, 1, rng);
  GroupNorm<float> norm(params, "n", 8, 8);
  std::mt19937_64 g(1);
  Var<float> x(random_tensor({2, 3, 16, 16}, g).cast<float>());
  auto a = relu(norm(conv(x)));
  auto b = relu(norm(conv(x)));
  CHECK(a.value() == b.value());
}

TEST_CASE("parameter registry rejects duplicate names") {
  ParameterSet<float> params;
  params.add("a.weight", Tensor({2}));
  CHECK_THROWS_AS(params.add("a.weight", Tensor({2})), ConfigurationError);
  CHECK(params.scalar_count() == 2);
}

TEST_CASE("orthogonal init has orthonormal rows") {
  Rng rng(2);
  const auto q = orthogonal<double>(4, 9, 1.0, rng);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < 9; ++k) dot += q[i * 9 + k] * q[j * 9 + k];
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
    }
}

TEST_CASE("adam step and gradient clipping") {
  ParameterSet<double> params;
  auto w = params.add("w", TensorD({2}, 1.0));
  w.mutable_grad()[0] = 3.0;
  w.mutable_grad()[1] = 4.0;
  CHECK(clip_grad_norm(params, 0.5) == doctest::Approx(5.0));
  CHECK(w.grad()[0] == doctest::Approx(0.3).epsilon(1e-5));
  Adam<double> adam(params);
  adam.step(0.1);
  // First Adam step moves each coordinate by ~lr * sign(g).
  CHECK(w.value()[0] == doctest::Approx(0.9).epsilon(1e-4));
  CHECK(adam.steps_taken() == 1);
}

TEST_CASE("checkpoint round trip preserves names, shapes and values") {
  const auto path = std::filesystem::temp_directory_path() / "goalnav_ckpt_test.bin";
  std::mt19937_64 rng(8);
  Checkpoint ckpt;
  ckpt.config_hash = "abc123";
  ckpt.meta["note"] = "x";
  ckpt.add("a", random_tensor({2, 3}, rng).cast<float>());
  ckpt.add("b.c", random_tensor({4}, rng).cast<float>());
  write_checkpoint(path, ckpt);
  const auto back = read_checkpoint(path);
  CHECK(back.config_hash == "abc123");
  CHECK(back.meta["note"] == "x");
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.at("a") == ckpt.at("a"));
  CHECK(back.at("b.c") == ckpt.at("b.c"));
  CHECK(std::filesystem::file_size(path) > 10 * 4);
  std::filesystem::remove(path);
}

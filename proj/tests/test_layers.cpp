#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "finv/gradient_check.hpp"
#include "finv/layers.hpp"

using namespace finv;

namespace {

constexpr double pi = std::numbers::pi;

// Direct loop evaluation of a zero-padded cross-correlation.
Tensor naive_conv(const Tensor& in, const FilterBank& f, const std::vector<double>& bias, int pad, int stride) {
  const int oh = (in.height() + 2 * pad - f.size_y) / stride + 1;
  const int ow = (in.width() + 2 * pad - f.size_x) / stride + 1;
  Tensor out(Shape{oh, ow, f.out_channels});
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int o = 0; o < f.out_channels; ++o) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (int ky = 0; ky < f.size_y; ++ky)
          for (int kx = 0; kx < f.size_x; ++kx)
            for (int c = 0; c < f.in_channels; ++c) {
              const int iy = y * stride - pad + ky, ix = x * stride - pad + kx;
              if (iy < 0 || ix < 0 || iy >= in.height() || ix >= in.width()) continue;
              acc += f.at(o, ky, kx, c) * in(iy, ix, c);
            }
        out(y, x, o) = acc;
      }
  return out;
}

FilterBank random_bank(int size, int in, int out, std::uint64_t seed) {
  FilterBank bank(size, size, in, out);
  const Tensor w = random_tensor(Shape{1, 1, static_cast<int>(bank.weights.size())}, seed);
  std::copy(w.values().begin(), w.values().end(), bank.weights.begin());
  return bank;
}

Tensor pixel(std::vector<double> values) {
  const int c = static_cast<int>(values.size());
  return Tensor(Shape{1, 1, c}, std::move(values));
}

Tensor bins_of(double gx, double gy, int K, BinningMode mode) {
  return directional_bin(Tensor(Shape{1, 1, 1}, gx), Tensor(Shape{1, 1, 1}, gy), K, mode);
}

}  // namespace

TEST_CASE("layer kind names round-trip") {
  for (LayerKind k : {LayerKind::conv, LayerKind::relu, LayerKind::maxpool, LayerKind::lrn, LayerKind::bin_bilinear,
                      LayerKind::bin_hard, LayerKind::bin_approx, LayerKind::l2_block_norm, LayerKind::clamp}) {
    CHECK(layer_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS(layer_kind_from_string("softmax"));
}

TEST_CASE("conv with a 1x1 identity filter is the identity") {
  FilterBank bank(1, 1, 3, 3);
  for (int c = 0; c < 3; ++c) bank.at(c, 0, 0, c) = 1.0;
  const Conv2d conv(bank, {}, 0, 1);
  const Tensor x = random_tensor(Shape{5, 4, 3}, 1);
  CHECK(conv.forward(x) == x);
  CHECK(conv.backward(x, x, x) == x);
}

TEST_CASE("horizontal derivative of a ramp is 2 in the interior") {
  Tensor ramp(Shape{6, 7, 1});
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x) ramp(y, x, 0) = x;
  const int K = 8;
  const Conv2d directional(directional_filters(K, 1), {}, 0, 1);
  const Tensor out = directional.forward(ramp);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      CHECK(out(y, x, K) == doctest::Approx(2.0));
      CHECK(out(y, x, K + 1) == doctest::Approx(0.0));
      // Projection on u_k = (cos, sin) of (gx, gy) = (2, 0).
      for (int k = 0; k < K; ++k) CHECK(out(y, x, k) == doctest::Approx(2.0 * orientation_cos(k, K)));
    }
}

TEST_CASE("conv matches a direct loop oracle") {
  for (auto [pad, stride] : {std::pair{0, 1}, std::pair{1, 1}, std::pair{2, 2}, std::pair{1, 3}}) {
    const FilterBank bank = random_bank(3, 2, 4, 10 + pad + stride);
    const std::vector<double> bias = {0.5, -1.0, 0.0, 2.0};
    const Conv2d conv(bank, bias, pad, stride);
    const Tensor x = random_tensor(Shape{8, 7, 2}, 20 + pad);
    const Tensor expected = naive_conv(x, bank, bias, pad, stride);
    const Tensor got = conv.forward(x);
    REQUIRE(got.shape() == expected.shape());
    CHECK(max_abs(got - expected) < 1e-12);
  }
}

TEST_CASE("conv backward matches finite differences and rejects bad channels") {
  const Conv2d conv(random_bank(3, 2, 3, 4), {0.1, 0.2, 0.3}, 1, 1);
  const Tensor x = random_tensor(Shape{6, 6, 2}, 5);
  CHECK(gradient_check(conv, x, GradCheckOptions{.probes = 30}).max_relative_error < 1e-6);
  CHECK_THROWS_AS(conv.forward(random_tensor(Shape{6, 6, 3}, 1)), ShapeError);
  CHECK_THROWS_AS(Conv2d(random_bank(3, 2, 3, 4), {0.1}, 0, 1), std::invalid_argument);
}

TEST_CASE("a linear layer checks to machine precision") {
  const Conv2d conv(random_bank(2, 1, 2, 9), {}, 0, 1);
  // Central differences are exact for a linear map, so a long step only
  // reduces round-off.
  CHECK(gradient_check(conv, random_tensor(Shape{5, 5, 1}, 3), GradCheckOptions{.step = 1e-2}).max_relative_error <
        1e-9);
}

TEST_CASE("relu") {
  const Relu relu;
  const Tensor neg(Shape{3, 3, 2}, -1.5);
  CHECK(max_abs(relu.forward(neg)) == 0.0);
  CHECK(max_abs(relu.backward(neg, relu.forward(neg), Tensor(neg.shape(), 1.0))) == 0.0);

  Tensor pos = random_tensor(Shape{3, 3, 2}, 2);
  for (double& v : pos.values()) v = std::abs(v) + 1.0;
  const Tensor g = random_tensor(pos.shape(), 3);
  CHECK(relu.forward(pos) == pos);
  CHECK(relu.backward(pos, pos, g) == g);
  CHECK(gradient_check(relu, pos).max_relative_error < 1e-9);

  const GradCheckReport mixed = gradient_check(relu, random_tensor(Shape{6, 6, 3}, 4));
  CHECK(mixed.probed == 20);
  CHECK(mixed.max_relative_error < 1e-6);
}

TEST_CASE("maxpool examples") {
  const MaxPool pool(2, 2, 0);
  const Tensor x(Shape{2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor y = pool.forward(x);
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y[0] == 4.0);

  const MaxPool pool3(3, 1, 0);
  const Tensor c(Shape{3, 3, 1}, 7.0);
  CHECK(pool3.forward(c)[0] == 7.0);
  const Tensor g = pool3.backward(c, pool3.forward(c), Tensor(Shape{1, 1, 1}, 5.0));
  CHECK(g(0, 0, 0) == 5.0);
  CHECK(sum(g) == 5.0);

  CHECK_THROWS_AS(MaxPool(3, 1, 0).output_shape(Shape{2, 2, 1}), ShapeError);
}

TEST_CASE("maxpool never selects padding") {
  const MaxPool pool(3, 2, 2);
  Tensor x = random_tensor(Shape{7, 6, 2}, 9);
  for (double& v : x.values()) v = -1e6 - std::abs(v);  // padding would win if it were 0
  const std::vector<std::size_t> winners = pool.argmax(x);
  const Shape out = pool.output_shape(x.shape());
  REQUIRE(winners.size() == out.size());
  for (int oy = 0; oy < out.height; ++oy)
    for (int ox = 0; ox < out.width; ++ox)
      for (int c = 0; c < out.channels; ++c) {
        const std::size_t w = winners[(static_cast<std::size_t>(oy) * out.width + ox) * out.channels + c];
        const int iy = static_cast<int>(w) / x.width(), ix = static_cast<int>(w) % x.width();
        REQUIRE(iy < x.height());
        CHECK(iy >= oy * 2 - 2);
        CHECK(iy <= oy * 2);
        CHECK(ix >= ox * 2 - 2);
        CHECK(ix <= ox * 2);
        CHECK(x(iy, ix, c) == pool.forward(x)(oy, ox, c));
      }
}

TEST_CASE("maxpool backward with unique maxima") {
  const MaxPool pool(3, 2, 1);
  CHECK(gradient_check(pool, random_tensor(Shape{9, 9, 2}, 12)).max_relative_error < 1e-6);
}

TEST_CASE("lrn examples") {
  const Lrn sign(1, 0.0, 1.0, 0.5);
  const Tensor x = pixel({-2.0, 0.5, 3.0});
  CHECK(sign.forward(x) == pixel({-1.0, 1.0, 1.0}));

  const Lrn l2(2, 0.0, 1.0, 0.5);
  const Tensor y = l2.forward(pixel({3.0, 4.0}));
  CHECK(y[0] == doctest::Approx(0.6));
  CHECK(y[1] == doctest::Approx(0.8));

  CHECK_THROWS_AS(Lrn(3, 1.0, 1.0, 0.5).output_shape(Shape{2, 2, 8}), ShapeError);
  const Lrn group(4, 2.0, 0.5, 0.75);
  CHECK(gradient_check(group, random_tensor(Shape{4, 4, 8}, 6)).max_relative_error < 1e-6);
}

TEST_CASE("bilinear binning examples") {
  const int K = 8;
  const Tensor aligned = bins_of(1.0, 0.0, K, BinningMode::bilinear);
  CHECK(aligned[0] == doctest::Approx(1.0));
  for (int k = 1; k < K; ++k) CHECK(aligned[k] == doctest::Approx(0.0));

  const double angle = pi / K, mag = 2.5;
  const Tensor between = bins_of(mag * std::cos(angle), mag * std::sin(angle), K, BinningMode::bilinear);
  CHECK(between[0] == doctest::Approx(mag / 2));
  CHECK(between[1] == doctest::Approx(mag / 2));
  for (int k = 2; k < K; ++k) CHECK(between[k] == doctest::Approx(0.0));

  CHECK(max_abs(bins_of(0.0, 0.0, K, BinningMode::bilinear)) == 0.0);
}

TEST_CASE("hard binning examples") {
  for (int K : {2, 8, 18}) {
    const Tensor aligned = bins_of(1.7, 0.0, K, BinningMode::hard);
    CHECK(aligned[0] == doctest::Approx(1.7));
    for (int k = 1; k < K; ++k) CHECK(aligned[k] == 0.0);
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> angle(0.0, 2 * pi);
  for (int i = 0; i < 200; ++i) {
    const double a = angle(rng), mag = 0.5 + i * 0.01;
    const Tensor h = bins_of(mag * std::cos(a), mag * std::sin(a), 18, BinningMode::hard);
    int fired = 0;
    for (double v : h.values()) fired += v != 0.0;
    CHECK(fired == 1);
    CHECK(sum(h) == doctest::Approx(mag * fired));
  }
}

TEST_CASE("bilinear and approximate binning agree at bin centres") {
  const int K = 8;
  for (int k = 0; k < K; ++k) {
    const double a = 2 * pi * k / K, mag = 0.7 + k;
    const Tensor b = bins_of(mag * std::cos(a), mag * std::sin(a), K, BinningMode::bilinear);
    const Tensor p = bins_of(mag * std::cos(a), mag * std::sin(a), K, BinningMode::approx);
    for (int j = 0; j < K; ++j) CHECK(b[j] == doctest::Approx(p[j]).scale(mag));
    CHECK(b[k] == doctest::Approx(mag));
  }
  // Beyond one bin of angular distance both vanish.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> angle(0.0, 2 * pi);
  for (int i = 0; i < 100; ++i) {
    const double a = angle(rng);
    const Tensor b = bins_of(std::cos(a), std::sin(a), K, BinningMode::bilinear);
    const Tensor p = bins_of(std::cos(a), std::sin(a), K, BinningMode::approx);
    for (int k = 0; k < K; ++k) {
      double d = std::abs(std::remainder(a - 2 * pi * k / K, 2 * pi));
      if (d >= 2 * pi / K) {
        CHECK(b[k] == 0.0);
        CHECK(p[k] == 0.0);
      }
    }
  }
}

TEST_CASE("bilinear binning backward at pixels with strong gradients") {
  const int K = 8;
  const Conv2d directional(directional_filters(K, 1), {}, 0, 1);
  const OrientationBinning bin(K, BinningMode::bilinear);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tensor input = directional.forward(random_tensor(Shape{10, 10, 1}, 100 + seed));
    // Keep only pixels with |g| > 0.1 by scaling weak gradients up.
    for (int y = 0; y < input.height(); ++y)
      for (int x = 0; x < input.width(); ++x) {
        const double m = std::hypot(input(y, x, K), input(y, x, K + 1));
        if (m < 0.1)
          for (int c = 0; c < K + 2; ++c) input(y, x, c) *= 0.2 / std::max(m, 1e-3);
      }
    CHECK(gradient_check(bin, input, GradCheckOptions{.kink_margin = 100, .seed = seed}).max_relative_error <
          1e-5);
  }
}

TEST_CASE("binning rejects wrong channel counts") {
  CHECK_THROWS_AS(OrientationBinning(8, BinningMode::hard).output_shape(Shape{2, 2, 8}), ShapeError);
  CHECK_THROWS_AS(directional_bin(Tensor(Shape{2, 2, 1}), Tensor(Shape{2, 3, 1}), 8, BinningMode::hard),
                  ShapeError);
}

TEST_CASE("clamp") {
  const ClampCeiling clamp(0.2);
  const Tensor small(Shape{2, 2, 1}, 0.1);
  CHECK(clamp.forward(small) == small);
  const Tensor big(Shape{1, 1, 1}, 0.5);
  CHECK(clamp.forward(big)[0] == 0.2);
  CHECK(clamp.backward(big, clamp.forward(big), Tensor(Shape{1, 1, 1}, 1.0))[0] == 0.0);
  Tensor near = random_tensor(Shape{5, 5, 2}, 8, 0.3);
  for (double& v : near.values()) v += 0.2;
  CHECK(gradient_check(clamp, near).max_relative_error < 1e-9);
}

TEST_CASE("l2 block norm") {
  const L2BlockNorm norm(0.0);
  const Tensor y = norm.forward(pixel({3.0, 4.0}));
  CHECK(y[0] == doctest::Approx(0.6));
  CHECK(y[1] == doctest::Approx(0.8));
  // Factor from a channel subset still scales every channel.
  const L2BlockNorm subset(0.0, {1});
  CHECK(subset.forward(pixel({3.0, 4.0})) == pixel({0.75, 1.0}));
  CHECK_THROWS_AS(L2BlockNorm(0.0, {5}).output_shape(Shape{1, 1, 2}), ShapeError);
}

TEST_CASE("every layer kind passes the gradient check") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const LayerCase& c : layer_kind_cases(seed)) {
      CAPTURE(c.name);
      const GradCheckReport r =
          gradient_check(*c.layer, c.input, GradCheckOptions{.kink_margin = c.kink_margin, .seed = seed});
      CHECK(r.probed == 20);
      CHECK(r.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("adjoint identity for every layer kind") {
  for (const LayerCase& c : layer_kind_cases(7)) {
    CAPTURE(c.name);
    const Tensor u = random_tensor(c.input.shape(), 31);
    const Tensor v = random_tensor(c.layer->output_shape(c.input.shape()), 32);
    // A short step keeps the forward difference inside one smooth piece.
    CHECK(adjoint_mismatch(*c.layer, c.input, u, v, 1e-7) < 1e-4);
  }
}

TEST_CASE("shape law for random parameters") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> dim(6, 20), small(1, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = dim(rng), w = dim(rng), c = small(rng);
    const int k = small(rng), stride = small(rng), pad = small(rng) - 1;
    const Tensor x = random_tensor(Shape{h, w, c}, trial);

    const Conv2d conv(random_bank(k, c, 2, trial), {}, pad, stride);
    const Shape cs{(h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1, 2};
    CHECK(conv.output_shape(x.shape()) == cs);
    CHECK(conv.forward(x).shape() == cs);

    const int window = k + 1, ppad = std::min(pad, window - 1);
    const MaxPool pool(window, stride, ppad);
    const Shape ps{(h + 2 * ppad - window) / stride + 1, (w + 2 * ppad - window) / stride + 1, c};
    CHECK(pool.output_shape(x.shape()) == ps);
    CHECK(pool.forward(x).shape() == ps);

    CHECK(Relu().forward(x).shape() == x.shape());
    CHECK(ClampCeiling(0.2).forward(x).shape() == x.shape());
    CHECK(Lrn(1, 1.0, 1.0, 0.5).forward(x).shape() == x.shape());
    CHECK(L2BlockNorm(1e-4).forward(x).shape() == x.shape());

    const Tensor g = random_tensor(Shape{h, w, 1}, trial + 100);
    CHECK(directional_bin(g, g, 2 * c + 2, BinningMode::approx).shape() == Shape{h, w, 2 * c + 2});
  }
}

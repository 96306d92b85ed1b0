#include "finv/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

namespace finv {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(shape);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  if (denom == 0.0) return 0.0;
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradient(const ScalarFunction& f, const Tensor& analytic, const Tensor& x,
                               const SignatureFunction& signature, const GradCheckOptions& options) {
  require_same_shape(analytic, x, "gradient check");
  GradCheckReport report;
  if (x.empty()) return report;
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  const double floor = options.floor_fraction * max_abs(analytic);
  const std::vector<std::uint8_t> base = signature ? signature(x) : std::vector<std::uint8_t>{};
  Tensor probe = x;
  for (int attempt = 0; attempt < options.max_attempts && report.probed < options.probes; ++attempt) {
    const std::size_t i = pick(rng);
    const double xi = x[i];
    if (signature) {
      const double reach = options.kink_margin * options.step;
      probe[i] = xi + reach;
      const bool same_hi = signature(probe) == base;
      probe[i] = xi - reach;
      const bool same_lo = signature(probe) == base;
      probe[i] = xi;
      if (!same_hi || !same_lo) {
        ++report.skipped;
        continue;
      }
    }
    probe[i] = xi + options.step;
    const double hi = f(probe);
    probe[i] = xi - options.step;
    const double lo = f(probe);
    probe[i] = xi;
    const double numeric = (hi - lo) / (2.0 * options.step);
    report.max_relative_error =
        std::max(report.max_relative_error, relative_error(analytic[i], numeric, floor));
    ++report.probed;
  }
  return report;
}

GradCheckReport gradient_check(const Layer& layer, const Tensor& input, const GradCheckOptions& options) {
  const Shape out_shape = layer.output_shape(input.shape());
  const Tensor cotangent = random_tensor(out_shape, options.seed ^ 0x9e3779b97f4a7c15ULL);
  const Tensor output = layer.forward(input);
  const Tensor analytic = layer.backward(input, output, cotangent);
  auto f = [&](const Tensor& t) { return dot(cotangent, layer.forward(t)); };
  auto sig = [&](const Tensor& t) {
    std::vector<std::uint8_t> s;
    layer.kink_signature(t, s);
    return s;
  };
  return check_gradient(f, analytic, input, sig, options);
}

GradCheckReport gradient_check(const Network& net, const Tensor& x, std::size_t stop,
                               const GradCheckOptions& options) {
  const Tensor cotangent = random_tensor(net.shape_at(stop), options.seed ^ 0x9e3779b97f4a7c15ULL);
  Activations cache;
  net.forward(x, stop, &cache);
  const Tensor analytic = net.backward(cache, cotangent);
  auto f = [&](const Tensor& t) { return dot(cotangent, net.forward(t, stop)); };
  auto sig = [&](const Tensor& t) { return net.kink_signature(t, stop); };
  return check_gradient(f, analytic, x, sig, options);
}

double adjoint_mismatch(const Layer& layer, const Tensor& x, const Tensor& u, const Tensor& v, double step) {
  require_same_shape(x, u, "adjoint direction");
  Tensor hi = x, lo = x;
  hi.add_scaled(u, step);
  lo.add_scaled(u, -step);
  const double jvp = (dot(v, layer.forward(hi)) - dot(v, layer.forward(lo))) / (2.0 * step);
  const double vjp = dot(layer.backward(x, layer.forward(x), v), u);
  return relative_error(vjp, jvp, 0.0);
}

std::vector<LayerCase> layer_kind_cases(std::uint64_t seed) {
  std::vector<LayerCase> cases;
  auto add = [&](std::string name, LayerPtr layer, Tensor input, double margin = 10.0) {
    cases.push_back({std::move(name), std::move(layer), std::move(input), margin});
  };

  FilterBank bank(3, 3, 2, 4);
  const Tensor w = random_tensor(Shape{1, 1, static_cast<int>(bank.weights.size())}, seed + 1);
  std::copy(w.values().begin(), w.values().end(), bank.weights.begin());
  add("conv", std::make_shared<Conv2d>(bank, std::vector<double>{0.1, -0.2, 0.3, 0.0}, 1, 2),
      random_tensor(Shape{9, 9, 2}, seed + 2));
  add("relu", std::make_shared<Relu>(), random_tensor(Shape{6, 6, 3}, seed + 3));
  add("maxpool", std::make_shared<MaxPool>(3, 2, 1), random_tensor(Shape{9, 9, 3}, seed + 4));
  add("lrn", std::make_shared<Lrn>(2, 2.0, 0.5, 0.75), random_tensor(Shape{5, 5, 4}, seed + 5));
  add("l2-block-norm", std::make_shared<L2BlockNorm>(1e-4, std::vector<int>{3, 4, 5}),
      random_tensor(Shape{4, 4, 6}, seed + 6));
  Tensor near_ceiling = random_tensor(Shape{6, 6, 2}, seed + 7, 0.3);
  for (double& v : near_ceiling.values()) v += 0.2;
  add("clamp", std::make_shared<ClampCeiling>(0.2), near_ceiling);

  // Binning inputs come from the directional filters so that the
  // projections are consistent with (gx, gy).
  for (const auto& [name, mode, k] : {std::tuple{"binning-bilinear", BinningMode::bilinear, 8},
                                      std::tuple{"binning-hard", BinningMode::hard, 18},
                                      std::tuple{"binning-approx", BinningMode::approx, 8}}) {
    const Conv2d directional(directional_filters(k, 1), {}, 0, 1);
    add(name, std::make_shared<OrientationBinning>(k, mode),
        directional.forward(random_tensor(Shape{8, 8, 1}, seed + 8 + k)),
        mode == BinningMode::bilinear ? 100.0 : 10.0);
  }
  return cases;
}

}  // namespace finv

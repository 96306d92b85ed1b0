#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "finv/layers.hpp"
#include "finv/network.hpp"
#include "finv/tensor.hpp"

namespace finv {

struct GradCheckOptions {
  int probes = 20;
  double step = 1e-5;
  // A probe is skipped when moving the coordinate by +-kink_margin*step
  // changes the kink signature, i.e. it sits next to a non-differentiability.
  double kink_margin = 10.0;
  int max_attempts = 5000;
  // Components below floor_fraction * max|analytic| are compared on that
  // absolute scale instead of their own magnitude.
  double floor_fraction = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  int probed = 0;
  int skipped = 0;
};

using ScalarFunction = std::function<double(const Tensor&)>;
using SignatureFunction = std::function<std::vector<std::uint8_t>(const Tensor&)>;

double relative_error(double analytic, double numeric, double floor);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h against
/// `analytic` at randomly drawn coordinates of x.
GradCheckReport check_gradient(const ScalarFunction& f, const Tensor& analytic, const Tensor& x,
                               const SignatureFunction& signature, const GradCheckOptions& options);

/// Checks layer.backward through the scalar <v, layer(x)> with a random
/// cotangent v.
GradCheckReport gradient_check(const Layer& layer, const Tensor& input, const GradCheckOptions& options = {});

/// Same for the first `stop` layers of a network.
GradCheckReport gradient_check(const Network& net, const Tensor& x, std::size_t stop,
                               const GradCheckOptions& options = {});

/// |<v, J u> - <backward(x, v), u>| / max(|.|, |.|), with J u by central
/// differences along u.
double adjoint_mismatch(const Layer& layer, const Tensor& x, const Tensor& u, const Tensor& v, double step);

/// Gaussian tensor with the given shape and seed.
Tensor random_tensor(const Shape& shape, std::uint64_t seed, double scale = 1.0);

struct LayerCase {
  std::string name;
  LayerPtr layer;
  Tensor input;
  /// Kink exclusion radius in units of the step. Bilinear binning needs a
  /// wider one: away from consistent (projection, gradient) inputs its
  /// derivative grows like 1/sin(angle) next to each bin centre.
  double kink_margin = 10.0;
};

/// One small instance of every layer kind (every binning mode included)
/// with a random input in the regime the layer is used in.
std::vector<LayerCase> layer_kind_cases(std::uint64_t seed);

}  // namespace finv

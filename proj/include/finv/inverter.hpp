#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "finv/descriptors.hpp"
#include "finv/gradient_check.hpp"
#include "finv/network.hpp"
#include "finv/priors.hpp"
#include "finv/tensor.hpp"

namespace finv {

/// Binary weights over code elements restricting the reconstruction loss.
class CodeMask {
 public:
  CodeMask() = default;
  explicit CodeMask(Tensor weights);

  static CodeMask all(const Shape& code);
  /// Ones inside `window` (all channels), zeros elsewhere.
  static CodeMask spatial(const Shape& code, const NeuronWindow& window);
  /// Ones on the listed channels (all positions), zeros elsewhere.
  static CodeMask channels(const Shape& code, const std::vector<int>& channels);

  const Tensor& weights() const { return weights_; }
  const Shape& shape() const { return weights_.shape(); }
  std::size_t count() const;

 private:
  Tensor weights_;
};

CodeMask make_spatial_mask(const Network& net, std::size_t layer, const NeuronWindow& window);
CodeMask make_channel_mask(const Network& net, std::size_t layer, const std::vector<int>& channels);

struct Stage {
  int iterations = 0;
  double rate = 0.0;
};

struct InversionConfig {
  PriorConfig prior;
  double momentum = 0.9;
  /// Tenfold decaying learning-rate schedule. With `auto_rate` the rates
  /// are multiples of step_scale / ||grad E(x_init)||_inf.
  std::vector<Stage> stages = {{300, 1.0}, {300, 0.1}, {300, 0.01}};
  bool auto_rate = true;
  double step_scale = 0.0015;
  std::uint64_t seed = 0;
  /// Euclidean norm of the initial noise.
  double init_scale = 0.1;
  std::optional<CodeMask> mask;
  bool record_trace = true;
  double divergence_factor = 1e6;

  void validate() const;
  int total_iterations() const;
};

struct ObjectiveTerms {
  double data = 0.0;
  double alpha = 0.0;
  double tv = 0.0;
  double total = 0.0;
};

struct ObjectiveEvaluation {
  ObjectiveTerms terms;
  Tensor gradient;
};

/// E(x) = ||M (Phi(sigma x) - Phi0)||^2 / ||M Phi0||^2
///        + lambda_alpha R_alpha(x) + lambda_tv R_TV(x)
/// with Phi the first `layer` layers of `net`.
class Objective {
 public:
  Objective(const Network& net, std::size_t layer, Tensor target, PriorConfig prior,
            std::optional<CodeMask> mask = std::nullopt);

  ObjectiveEvaluation evaluate(const Tensor& x) const;
  ObjectiveTerms value(const Tensor& x) const;
  /// Phi(sigma x).
  Tensor code(const Tensor& x) const;
  /// Piecewise regime of the network at sigma x.
  std::vector<std::uint8_t> kink_signature(const Tensor& x) const;

  const Shape& input_shape() const { return net_.input_shape(); }
  const PriorConfig& prior() const { return prior_; }

 private:
  ObjectiveTerms terms(const Tensor& x, const Tensor& code) const;

  const Network& net_;
  std::size_t layer_;
  Tensor target_;
  PriorConfig prior_;
  std::optional<Tensor> mask_;
  double target_energy_ = 0.0;
};

struct TraceRow {
  int iteration = 0;
  ObjectiveTerms terms;
  double gradient_inf = 0.0;
};

struct ReconstructionResult {
  /// Best iterate x*; the reconstructed (mean-subtracted) image is sigma x*.
  Tensor solution;
  double sigma = 1.0;
  std::vector<TraceRow> trace;
  ObjectiveTerms initial;
  ObjectiveTerms final;
  int iterations = 0;
  int best_iteration = 0;

  Tensor image() const { return solution * sigma; }
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<TraceRow> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

/// Finite-difference check of the full objective gradient.
GradCheckReport gradient_check(const Objective& objective, const Tensor& x, const GradCheckOptions& options = {});

/// Zero-mean Gaussian noise rescaled to Euclidean norm `scale`.
Tensor initial_guess(const Shape& shape, std::uint64_t seed, double scale);

/// One momentum update: velocity <- m velocity - rate grad; x <- x + velocity.
void momentum_step(Tensor& x, Tensor& velocity, const Tensor& gradient, double momentum, double rate);

/// Minimises the objective by momentum gradient descent from seeded noise
/// and returns the best iterate. Throws DivergenceError when the objective
/// exceeds divergence_factor times its initial value or stops being finite.
ReconstructionResult invert(const Network& net, std::size_t layer, const Tensor& target,
                            const InversionConfig& config);

}  // namespace finv

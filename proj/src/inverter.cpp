#include "finv/inverter.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace finv {

// ------------------------------------------------------------------ CodeMask

CodeMask::CodeMask(Tensor weights) : weights_(std::move(weights)) {
  for (double w : weights_.values()) {
    if (w != 0.0 && w != 1.0) throw std::invalid_argument("code mask weights must be 0 or 1");
  }
}

CodeMask CodeMask::all(const Shape& code) { return CodeMask(Tensor(code, 1.0)); }

CodeMask CodeMask::spatial(const Shape& code, const NeuronWindow& window) {
  if (window.y0 < 0 || window.x0 < 0 || window.height < 1 || window.width < 1 ||
      window.y0 + window.height > code.height || window.x0 + window.width > code.width) {
    throw ShapeError("mask window outside code " + code.str());
  }
  Tensor w(code);
  for (int y = window.y0; y < window.y0 + window.height; ++y)
    for (int x = window.x0; x < window.x0 + window.width; ++x)
      for (int c = 0; c < code.channels; ++c) w(y, x, c) = 1.0;
  return CodeMask(std::move(w));
}

CodeMask CodeMask::channels(const Shape& code, const std::vector<int>& channels) {
  Tensor w(code);
  for (int c : channels) {
    if (c < 0 || c >= code.channels) {
      throw ShapeError("mask channel " + std::to_string(c) + " outside code " + code.str());
    }
    for (int y = 0; y < code.height; ++y)
      for (int x = 0; x < code.width; ++x) w(y, x, c) = 1.0;
  }
  return CodeMask(std::move(w));
}

std::size_t CodeMask::count() const {
  std::size_t n = 0;
  for (double w : weights_.values()) n += w != 0.0;
  return n;
}

CodeMask make_spatial_mask(const Network& net, std::size_t layer, const NeuronWindow& window) {
  return CodeMask::spatial(net.shape_at(layer), window);
}

CodeMask make_channel_mask(const Network& net, std::size_t layer, const std::vector<int>& channels) {
  return CodeMask::channels(net.shape_at(layer), channels);
}

// ------------------------------------------------------------------- config

void InversionConfig::validate() const {
  prior.validate();
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (stages.empty()) throw std::invalid_argument("need at least one optimisation stage");
  double previous = INFINITY;
  for (const Stage& s : stages) {
    if (s.iterations < 0) throw std::invalid_argument("stage iterations must be >= 0");
    if (!(s.rate > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (!(s.rate < previous)) throw std::invalid_argument("learning rates must decrease across stages");
    previous = s.rate;
  }
  if (auto_rate && !(step_scale > 0.0)) throw std::invalid_argument("step scale must be positive");
  if (!(init_scale > 0.0)) throw std::invalid_argument("init scale must be positive");
  if (!(divergence_factor > 1.0)) throw std::invalid_argument("divergence factor must exceed 1");
}

int InversionConfig::total_iterations() const {
  int n = 0;
  for (const Stage& s : stages) n += s.iterations;
  return n;
}

// ---------------------------------------------------------------- objective

Objective::Objective(const Network& net, std::size_t layer, Tensor target, PriorConfig prior,
                     std::optional<CodeMask> mask)
    : net_(net), layer_(layer), target_(std::move(target)), prior_(prior) {
  prior_.validate();
  const Shape code = net_.shape_at(layer_);
  if (target_.shape() != code) {
    throw ShapeError("target code " + target_.shape().str() + " does not match layer output " + code.str());
  }
  if (mask) {
    if (mask->shape() != code) {
      throw ShapeError("mask " + mask->shape().str() + " does not match code " + code.str());
    }
    mask_ = mask->weights();
    target_energy_ = squared_norm(hadamard(*mask_, target_));
  } else {
    target_energy_ = squared_norm(target_);
  }
  if (!(target_energy_ > 0.0)) throw std::invalid_argument("masked target code has zero norm");
}

Tensor Objective::code(const Tensor& x) const { return net_.forward(x * prior_.sigma, layer_); }

ObjectiveTerms Objective::terms(const Tensor& x, const Tensor& code) const {
  Tensor residual = code - target_;
  if (mask_) residual = hadamard(residual, *mask_);
  ObjectiveTerms t;
  t.data = squared_norm(residual) / target_energy_;
  if (prior_.lambda_alpha > 0.0) t.alpha = prior_.lambda_alpha * alpha_norm(x, prior_.alpha).value;
  if (prior_.lambda_tv > 0.0) t.tv = prior_.lambda_tv * tv_beta(x, prior_.beta, prior_.tv_epsilon).value;
  t.total = t.data + t.alpha + t.tv;
  return t;
}

std::vector<std::uint8_t> Objective::kink_signature(const Tensor& x) const {
  return net_.kink_signature(x * prior_.sigma, layer_);
}

GradCheckReport gradient_check(const Objective& objective, const Tensor& x, const GradCheckOptions& options) {
  const ObjectiveEvaluation eval = objective.evaluate(x);
  auto f = [&](const Tensor& t) { return objective.value(t).total; };
  auto sig = [&](const Tensor& t) { return objective.kink_signature(t); };
  return check_gradient(f, eval.gradient, x, sig, options);
}

ObjectiveTerms Objective::value(const Tensor& x) const { return terms(x, code(x)); }

ObjectiveEvaluation Objective::evaluate(const Tensor& x) const {
  Activations cache;
  const Tensor phi = net_.forward(x * prior_.sigma, layer_, &cache);
  Tensor residual = phi - target_;
  if (mask_) residual = hadamard(residual, *mask_);

  ObjectiveEvaluation out;
  out.terms.data = squared_norm(residual) / target_energy_;
  if (mask_) residual = hadamard(residual, *mask_);
  residual *= 2.0 / target_energy_;
  out.gradient = net_.backward(cache, residual);
  out.gradient *= prior_.sigma;

  if (prior_.lambda_alpha > 0.0) {
    const PriorValue a = alpha_norm(x, prior_.alpha);
    out.terms.alpha = prior_.lambda_alpha * a.value;
    out.gradient.add_scaled(a.gradient, prior_.lambda_alpha);
  }
  if (prior_.lambda_tv > 0.0) {
    const PriorValue v = tv_beta(x, prior_.beta, prior_.tv_epsilon);
    out.terms.tv = prior_.lambda_tv * v.value;
    out.gradient.add_scaled(v.gradient, prior_.lambda_tv);
  }
  out.terms.total = out.terms.data + out.terms.alpha + out.terms.tv;
  return out;
}

// --------------------------------------------------------------- optimiser

Tensor initial_guess(const Shape& shape, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor x(shape);
  for (double& v : x.values()) v = normal(rng);
  const double n = norm(x);
  if (n > 0.0) x *= scale / n;
  return x;
}

void momentum_step(Tensor& x, Tensor& velocity, const Tensor& gradient, double momentum, double rate) {
  velocity *= momentum;
  velocity.add_scaled(gradient, -rate);
  x += velocity;
}

ReconstructionResult invert(const Network& net, std::size_t layer, const Tensor& target,
                            const InversionConfig& config) {
  config.validate();
  const Objective objective(net, layer, target, config.prior, config.mask);

  ReconstructionResult result;
  result.sigma = config.prior.sigma;
  Tensor x = initial_guess(net.input_shape(), config.seed, config.init_scale);
  Tensor velocity(x.shape());

  ObjectiveEvaluation eval = objective.evaluate(x);
  result.initial = eval.terms;
  const double rate_unit = config.auto_rate ? config.step_scale / std::max(max_abs(eval.gradient), 1e-300) : 1.0;

  double best = eval.terms.total;
  result.solution = x;
  int iteration = 0;
  for (const Stage& stage : config.stages) {
    const double rate = stage.rate * rate_unit;
    for (int i = 0; i < stage.iterations; ++i, ++iteration) {
      if (iteration > 0) eval = objective.evaluate(x);
      const double total = eval.terms.total;
      if (config.record_trace) result.trace.push_back({iteration, eval.terms, max_abs(eval.gradient)});
      if (!std::isfinite(total) || total > config.divergence_factor * result.initial.total) {
        std::ostringstream msg;
        msg << "inversion diverged at iteration " << iteration << ": objective " << total << " vs initial "
            << result.initial.total;
        throw DivergenceError(msg.str(), std::move(result.trace));
      }
      if (total < best) {
        best = total;
        result.solution = x;
        result.best_iteration = iteration;
      }
      momentum_step(x, velocity, eval.gradient, config.momentum, rate);
    }
  }
  result.iterations = iteration;

  // The last update has not been scored yet.
  const ObjectiveTerms last = objective.value(x);
  if (std::isfinite(last.total) && last.total < best) {
    result.solution = x;
    result.best_iteration = iteration;
  }
  result.final = objective.value(result.solution);
  return result;
}

}  // namespace finv

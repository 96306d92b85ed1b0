#include "finv/priors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <stdexcept>

namespace finv {

void PriorConfig::validate() const {
  if (!(alpha > 1.0)) throw std::invalid_argument("alpha must be > 1");
  if (!(beta >= 1.0)) throw std::invalid_argument("beta must be >= 1");
  if (!(lambda_alpha >= 0.0) || !(lambda_tv >= 0.0)) throw std::invalid_argument("lambdas must be >= 0");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
  if (!(tv_epsilon >= 0.0)) throw std::invalid_argument("tv epsilon must be >= 0");
}

PriorValue alpha_norm(const Tensor& x, double alpha) {
  if (!(alpha > 1.0)) throw std::invalid_argument("alpha-norm exponent must be > 1");
  PriorValue out{0.0, Tensor(x.shape())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::abs(x[i]);
    if (a == 0.0) continue;
    const double p = std::pow(a, alpha - 1.0);
    out.value += p * a;
    out.gradient[i] = alpha * p * (x[i] > 0 ? 1.0 : -1.0);
  }
  return out;
}

PriorValue tv_beta(const Tensor& x, double beta, double epsilon) {
  if (!(beta >= 1.0)) throw std::invalid_argument("TV exponent beta must be >= 1");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("TV epsilon must be >= 0");
  PriorValue out{0.0, Tensor(x.shape())};
  const int H = x.height(), W = x.width(), C = x.channels();
  Tensor& g = out.gradient;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < C; ++c) {
        const double dx = j + 1 < W ? x(i, j + 1, c) - x(i, j, c) : 0.0;
        const double dy = i + 1 < H ? x(i + 1, j, c) - x(i, j, c) : 0.0;
        const double s = dx * dx + dy * dy + epsilon;
        if (s == 0.0) continue;
        out.value += std::pow(s, beta / 2.0);
        const double w = beta * std::pow(s, beta / 2.0 - 1.0);
        if (j + 1 < W) {
          g(i, j + 1, c) += w * dx;
          g(i, j, c) -= w * dx;
        }
        if (i + 1 < H) {
          g(i + 1, j, c) += w * dy;
          g(i, j, c) -= w * dy;
        }
      }
  return out;
}

Coefficients balance_coefficients(double sigma, int height, int width, double bound, double range_ratio,
                                  double alpha, double beta) {
  if (!(sigma > 0) || height <= 0 || width <= 0 || !(bound > 0) || !(range_ratio > 0) || !(alpha > 0) ||
      !(beta > 0)) {
    throw std::invalid_argument("balance_coefficients needs positive inputs");
  }
  const double area = static_cast<double>(height) * width;
  return Coefficients{std::pow(sigma / bound, alpha) / area, std::pow(sigma / (range_ratio * bound), beta) / area};
}

double estimate_sigma(std::span<const Tensor> images) {
  if (images.empty()) throw std::invalid_argument("estimate_sigma needs at least one image");
  double total = 0.0;
  for (const Tensor& im : images) total += norm(im);
  return total / static_cast<double>(images.size());
}

Tensor lattice_interpolation(std::span<const double> samples, int size, int step, double beta, double epsilon,
                             int iterations) {
  if (size < 2 || step < 1 || (size - 1) % step != 0) {
    throw std::invalid_argument("lattice size must be 1 + a multiple of the step");
  }
  const int per_side = (size - 1) / step + 1;
  if (static_cast<int>(samples.size()) != per_side * per_side) {
    throw std::invalid_argument("lattice needs " + std::to_string(per_side * per_side) + " samples");
  }
  Tensor x(Shape{size, size, 1});
  std::vector<int> unknown(static_cast<std::size_t>(size) * size, -1);
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  int free_count = 0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      if (i % step == 0 && j % step == 0) {
        x(i, j, 0) = samples[static_cast<std::size_t>(i / step) * per_side + j / step];
      } else {
        x(i, j, 0) = mean;
        unknown[static_cast<std::size_t>(i) * size + j] = free_count++;
      }
    }

  using SparseMatrix = Eigen::SparseMatrix<double>;
  Eigen::SimplicialLDLT<SparseMatrix> solver;
  for (int it = 0; it < iterations; ++it) {
    // Quadratic majoriser: each pixel term (dx^2 + dy^2 + eps)^(beta/2) is
    // replaced by w (dx^2 + dy^2) with w frozen at the current iterate.
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(free_count);
    auto couple = [&](int pi, int pj, int qi, int qj, double w) {
      const int a = unknown[static_cast<std::size_t>(pi) * size + pj];
      const int b = unknown[static_cast<std::size_t>(qi) * size + qj];
      if (a >= 0) {
        triplets.emplace_back(a, a, w);
        if (b >= 0) triplets.emplace_back(a, b, -w);
        else rhs[a] += w * x(qi, qj, 0);
      }
      if (b >= 0) {
        triplets.emplace_back(b, b, w);
        if (a >= 0) triplets.emplace_back(b, a, -w);
        else rhs[b] += w * x(pi, pj, 0);
      }
    };
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) {
        const double dx = j + 1 < size ? x(i, j + 1, 0) - x(i, j, 0) : 0.0;
        const double dy = i + 1 < size ? x(i + 1, j, 0) - x(i, j, 0) : 0.0;
        const double w = std::pow(dx * dx + dy * dy + epsilon, beta / 2.0 - 1.0);
        if (j + 1 < size) couple(i, j, i, j + 1, w);
        if (i + 1 < size) couple(i, j, i + 1, j, w);
      }
    SparseMatrix system(free_count, free_count);
    system.setFromTriplets(triplets.begin(), triplets.end());
    solver.compute(system);
    if (solver.info() != Eigen::Success) throw std::runtime_error("lattice interpolation: factorisation failed");
    const Eigen::VectorXd solution = solver.solve(rhs);
    double change = 0.0;
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) {
        const int a = unknown[static_cast<std::size_t>(i) * size + j];
        if (a < 0) continue;
        change = std::max(change, std::abs(solution[a] - x(i, j, 0)));
        x(i, j, 0) = solution[a];
      }
    if (change < 1e-13) break;
  }
  return x;
}

std::vector<double> segment_jump_ratios(const Tensor& image, int step, double min_rise) {
  std::vector<double> ratios;
  for (int i = 0; i < image.height(); i += step) {
    for (int j = 0; j + step < image.width(); j += step) {
      const double rise = std::abs(image(i, j + step, 0) - image(i, j, 0));
      if (rise <= min_rise) continue;
      double largest = 0.0;
      for (int k = j; k < j + step; ++k) largest = std::max(largest, std::abs(image(i, k + 1, 0) - image(i, k, 0)));
      ratios.push_back(largest / rise);
    }
  }
  return ratios;
}

}  // namespace finv

#pragma once

#include <span>
#include <vector>

#include "finv/tensor.hpp"

namespace finv {

/// Natural-image prior settings. `lambda_alpha` / `lambda_tv` are the
/// multipliers of the alpha-norm and TV terms; `sigma` is the image scale
/// (average Euclidean norm of mean-subtracted natural images).
struct PriorConfig {
  double alpha = 6.0;
  double beta = 2.0;
  double lambda_alpha = 0.0;
  double lambda_tv = 0.0;
  double sigma = 1.0;
  double bound = 128.0;
  double range_ratio = 0.01;
  double tv_epsilon = 1e-8;

  /// Throws std::invalid_argument unless alpha > 1, beta >= 1, lambdas >= 0
  /// and sigma > 0.
  void validate() const;
};

struct PriorValue {
  double value = 0.0;
  Tensor gradient;
};

/// sum_i |x_i|^alpha over every element (all channels).
PriorValue alpha_norm(const Tensor& x, double alpha);

/// sum_{i,j,c} ((x_{i,j+1,c} - x_{i,j,c})^2 + (x_{i+1,j,c} - x_{i,j,c})^2 + eps)^(beta/2),
/// dropping the forward difference that leaves the image on the last
/// row/column. The gradient is that of this discrete sum.
PriorValue tv_beta(const Tensor& x, double beta, double epsilon);

struct Coefficients {
  double lambda_alpha = 0.0;
  double lambda_tv = 0.0;
};

/// lambda_alpha = sigma^alpha / (H W B^alpha), lambda_tv = sigma^beta / (H W (a B)^beta).
Coefficients balance_coefficients(double sigma, int height, int width, double bound, double range_ratio,
                                  double alpha, double beta);

/// Mean Euclidean norm of (mean-subtracted) images.
double estimate_sigma(std::span<const Tensor> images);

/// Minimiser of the TV-beta energy of a single-channel size x size image
/// whose pixels on the lattice (step*i, step*j) are fixed to `samples`
/// (row-major, ((size-1)/step+1)^2 values); the free pixels are solved by
/// iteratively reweighted least squares.
Tensor lattice_interpolation(std::span<const double> samples, int size, int step, double beta,
                             double epsilon, int iterations = 200);

/// Along every row through the lattice, for each pair of neighbouring
/// samples whose values differ by more than `min_rise`, the largest
/// adjacent-pixel jump divided by the total rise. Returns the per-segment
/// ratios.
std::vector<double> segment_jump_ratios(const Tensor& image, int step, double min_rise);

}  // namespace finv

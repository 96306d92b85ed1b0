#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "finv/inverter.hpp"
#include "finv/io.hpp"
#include "finv/network.hpp"
#include "finv/tensor.hpp"

namespace finv {

/// Mean Euclidean distance over all unordered pairs of codes.
double normalization_constant(std::span<const Tensor> codes);

/// 100 * ||reconstructed - target|| / n_phi.
double normalized_error(const Tensor& reconstructed, const Tensor& target, double n_phi);

struct ErrorStats {
  double mean = 0.0;
  /// Population standard deviation of the per-image errors.
  double std = 0.0;
};

ErrorStats error_stats(std::span<const double> errors);

/// Images of one directory, centre-cropped and resized to a common square
/// size, with the per-channel dataset mean removed.
struct ImageSet {
  std::vector<std::string> ids;
  std::vector<Tensor> images;
  MeanImage mean;

  std::size_t size() const { return images.size(); }
};

/// Loads every .png/.pgm/.ppm in `dir` (sorted by file name). Grayscale
/// images are replicated to `channels` when channels == 3.
ImageSet load_image_set(const std::filesystem::path& dir, int size, int channels = 3, int limit = 0);

struct ExperimentConfig {
  std::string representation = "net";
  InversionConfig inversion;
  /// Derive lambda_alpha from the balance heuristic instead of using
  /// inversion.prior.lambda_alpha.
  bool auto_lambda_alpha = true;
  /// lambda_tv values to sweep; empty means inversion.prior.lambda_tv only.
  std::vector<double> lambda_tv_sweep;
  /// Derive sigma from the image set instead of inversion.prior.sigma.
  bool auto_sigma = true;
  int jobs = 1;
  /// Record wall-clock time per inversion (breaks byte-reproducibility).
  bool timing = false;
};

struct ExperimentRow {
  std::string image_id;
  std::string representation;
  double lambda_alpha = 0.0;
  double lambda_tv = 0.0;
  double beta = 0.0;
  double error_percent = 0.0;
  int iterations = 0;
  double wall_ms = 0.0;
  /// Final over initial data term of the inversion.
  double data_ratio = 0.0;
  bool best_nonincreasing = true;
};

struct ExperimentReport {
  std::string representation;
  double lambda_tv = 0.0;
  double n_phi = 0.0;
  double sigma = 0.0;
  std::vector<ExperimentRow> rows;
  ErrorStats stats;
  std::vector<Tensor> reconstructions;
};

/// Inverts the code at `layer` of every image for each swept lambda_tv and
/// reports the normalised reconstruction errors. Image i uses seed
/// inversion.seed + i.
std::vector<ExperimentReport> run_experiment(const Network& net, std::size_t layer, const ImageSet& images,
                                             const ExperimentConfig& config);

/// CSV with columns image_id, representation, lambda_alpha, lambda_vbeta,
/// beta, error_percent, iterations, wall_ms, followed by one summary row
/// (image_id "mean+-std") per report.
void write_report_csv(std::ostream& out, std::span<const ExperimentReport> reports);

/// Whether every objective in a trace is finite and the best-so-far value
/// never increases.
bool best_so_far_nonincreasing(std::span<const TraceRow> trace);

}  // namespace finv

#include "finv/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <thread>

#include "finv/priors.hpp"

namespace finv {

double normalization_constant(std::span<const Tensor> codes) {
  if (codes.size() < 2) throw std::invalid_argument("normalization constant needs at least two codes");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (std::size_t j = i + 1; j < codes.size(); ++j, ++pairs) total += norm(codes[i] - codes[j]);
  return total / static_cast<double>(pairs);
}

double normalized_error(const Tensor& reconstructed, const Tensor& target, double n_phi) {
  if (!(n_phi > 0.0)) throw std::invalid_argument("normalization constant must be positive");
  return 100.0 * norm(reconstructed - target) / n_phi;
}

ErrorStats error_stats(std::span<const double> errors) {
  if (errors.empty()) return {};
  ErrorStats s;
  for (double e : errors) s.mean += e;
  s.mean /= static_cast<double>(errors.size());
  double var = 0.0;
  for (double e : errors) var += (e - s.mean) * (e - s.mean);
  s.std = std::sqrt(var / static_cast<double>(errors.size()));
  return s;
}

ImageSet load_image_set(const std::filesystem::path& dir, int size, int channels, int limit) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  if (channels != 1 && channels != 3) throw std::invalid_argument("image channels must be 1 or 3");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (entry.is_regular_file() && (ext == ".png" || ext == ".pgm" || ext == ".ppm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (limit > 0 && files.size() > static_cast<std::size_t>(limit)) files.resize(static_cast<std::size_t>(limit));
  if (files.empty()) throw IoError("no images in " + dir.string());

  ImageSet set;
  for (const auto& f : files) {
    Tensor im = center_crop_resize(load_image(f), size);
    if (im.channels() != channels) {
      if (im.channels() == 1) {
        std::vector<Tensor> planes(3, im);
        im = stack_channels(planes);
      } else {
        Tensor gray(Shape{im.height(), im.width(), 1});
        for (int y = 0; y < im.height(); ++y)
          for (int x = 0; x < im.width(); ++x) gray(y, x, 0) = (im(y, x, 0) + im(y, x, 1) + im(y, x, 2)) / 3.0;
        im = std::move(gray);
      }
    }
    set.ids.push_back(f.stem().string());
    set.images.push_back(std::move(im));
  }
  set.mean = MeanImage::per_channel(set.images);
  for (Tensor& im : set.images) im = set.mean.subtract_from(std::move(im));
  return set;
}

bool best_so_far_nonincreasing(std::span<const TraceRow> trace) {
  double best = INFINITY;
  double previous_best = INFINITY;
  for (const TraceRow& row : trace) {
    if (!std::isfinite(row.terms.total)) return false;
    best = std::min(best, row.terms.total);
    if (best > previous_best) return false;
    previous_best = best;
  }
  return true;
}

std::vector<ExperimentReport> run_experiment(const Network& net, std::size_t layer, const ImageSet& images,
                                             const ExperimentConfig& config) {
  if (images.size() == 0) throw std::invalid_argument("empty image set");
  for (const Tensor& im : images.images) {
    if (im.shape() != net.input_shape()) {
      throw ShapeError("image " + im.shape().str() + " does not match network input " + net.input_shape().str());
    }
  }

  std::vector<Tensor> codes;
  codes.reserve(images.size());
  for (const Tensor& im : images.images) codes.push_back(net.forward(im, layer));
  // With a single image there are no pairs; its own code norm stands in.
  const double n_phi = codes.size() > 1 ? normalization_constant(codes) : norm(codes.front());
  if (!(n_phi > 0.0)) throw std::invalid_argument("all codes coincide; normalization constant is zero");

  PriorConfig prior = config.inversion.prior;
  if (config.auto_sigma) {
    prior.sigma = estimate_sigma(images.images);
    if (!(prior.sigma > 0.0)) throw std::invalid_argument("image set has zero energy; cannot estimate sigma");
  }
  if (config.auto_lambda_alpha) {
    const Shape& in = net.input_shape();
    prior.lambda_alpha = balance_coefficients(prior.sigma, in.height, in.width, prior.bound, prior.range_ratio,
                                              prior.alpha, prior.beta)
                             .lambda_alpha;
  }
  std::vector<double> sweep = config.lambda_tv_sweep;
  if (sweep.empty()) sweep.push_back(prior.lambda_tv);

  std::vector<ExperimentReport> reports;
  for (double lambda_tv : sweep) {
    ExperimentReport report;
    report.representation = config.representation;
    report.lambda_tv = lambda_tv;
    report.n_phi = n_phi;
    report.sigma = prior.sigma;
    report.rows.resize(images.size());
    report.reconstructions.resize(images.size());

    InversionConfig base = config.inversion;
    base.prior = prior;
    base.prior.lambda_tv = lambda_tv;

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      for (std::size_t i = next++; i < images.size(); i = next++) {
        try {
          InversionConfig cfg = base;
          cfg.seed = base.seed + i;
          const auto start = std::chrono::steady_clock::now();
          const ReconstructionResult result = invert(net, layer, codes[i], cfg);
          const auto stop = std::chrono::steady_clock::now();

          ExperimentRow& row = report.rows[i];
          row.image_id = images.ids[i];
          row.representation = config.representation;
          row.lambda_alpha = cfg.prior.lambda_alpha;
          row.lambda_tv = lambda_tv;
          row.beta = cfg.prior.beta;
          row.error_percent = normalized_error(net.forward(result.image(), layer), codes[i], n_phi);
          row.iterations = result.iterations;
          row.wall_ms = config.timing ? std::chrono::duration<double, std::milli>(stop - start).count() : 0.0;
          row.data_ratio = result.initial.data > 0.0 ? result.final.data / result.initial.data : 0.0;
          row.best_nonincreasing = best_so_far_nonincreasing(result.trace);
          report.reconstructions[i] = result.image();
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = images.size();
        }
      }
    };
    const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(images.size())));
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<double> errors;
    for (const auto& row : report.rows) errors.push_back(row.error_percent);
    report.stats = error_stats(errors);
    reports.push_back(std::move(report));
  }
  return reports;
}

void write_report_csv(std::ostream& out, std::span<const ExperimentReport> reports) {
  out << "image_id,representation,lambda_alpha,lambda_vbeta,beta,error_percent,iterations,wall_ms\n";
  out << std::setprecision(10);
  for (const ExperimentReport& report : reports) {
    for (const ExperimentRow& row : report.rows) {
      out << row.image_id << ',' << row.representation << ',' << row.lambda_alpha << ',' << row.lambda_tv << ','
          << row.beta << ',' << row.error_percent << ',' << row.iterations << ',' << row.wall_ms << '\n';
    }
    const ExperimentRow& first = report.rows.front();
    out << "mean+-std," << report.representation << ',' << first.lambda_alpha << ',' << report.lambda_tv << ','
        << first.beta << ',' << report.stats.mean << " +- " << report.stats.std << ",,\n";
  }
}

}  // namespace finv

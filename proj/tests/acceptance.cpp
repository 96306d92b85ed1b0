// Acceptance run: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "finv/descriptors.hpp"
#include "finv/eval.hpp"
#include "finv/gradient_check.hpp"
#include "finv/inverter.hpp"
#include "finv/io.hpp"
#include "finv/network.hpp"
#include "finv/priors.hpp"
#include "support/perturbation_field.hpp"

using namespace finv;

namespace {

const std::filesystem::path kNatural = std::filesystem::path(FINV_TEST_DATA) / "natural";
constexpr int kSize = 64;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const Outcome& o, double seconds) {
  std::printf("criterion %d: %s (%.1fs) %s\n", id, o.pass ? "PASS" : "FAIL", seconds, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void run(int id, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(id, o, seconds_since(start));
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

// ------------------------------------------------------------ criterion 1

Outcome gradient_correctness() {
  const auto start = Clock::now();
  Outcome o;
  double worst = 0.0;
  int cases = 0;
  auto record = [&](const std::string& name, const GradCheckReport& r) {
    ++cases;
    worst = std::max(worst, r.max_relative_error);
    if (r.probed < 20 || !(r.max_relative_error < 1e-4)) {
      o.pass = false;
      o.detail += name + "(probed " + std::to_string(r.probed) + ", err " + fmt("%.2e", r.max_relative_error) + ") ";
    }
  };

  for (const LayerCase& c : layer_kind_cases(1)) {
    GradCheckOptions options;
    options.kink_margin = c.kink_margin;
    record(c.name, gradient_check(*c.layer, c.input, options));
  }

  PriorConfig prior;
  prior.sigma = 40.0 * 40.0;
  prior.lambda_alpha = 1e-3;
  prior.lambda_tv = 0.5;
  for (DescriptorType type : {DescriptorType::hog, DescriptorType::hogb, DescriptorType::dsift}) {
    const Network net = build_descriptor(type, {}, Shape{40, 40, 3});
    const Tensor target = net.forward(random_tensor(net.input_shape(), 4, 40.0));
    const Objective objective(net, net.depth(), target, prior);
    record(to_string(type) + "-objective", gradient_check(objective, random_tensor(net.input_shape(), 5, 1.0 / 40.0)));
  }

  const Network cnn = build_toy_cnn(1, Shape{32, 32, 3});
  PriorConfig cnn_prior;
  cnn_prior.sigma = 40.0 * std::sqrt(32.0 * 32.0 * 3.0);
  cnn_prior.lambda_alpha = 1e-3;
  cnn_prior.lambda_tv = 1.0;
  for (const std::string layer : {"conv1", "norm1", "norm2", "relu3"}) {
    const std::size_t k = cnn.resolve(layer);
    const Tensor target = cnn.forward(random_tensor(cnn.input_shape(), 6, 40.0), k);
    const Objective objective(cnn, k, target, cnn_prior);
    record("cnn-" + layer + "-objective", gradient_check(objective, random_tensor(cnn.input_shape(), 7, 0.02)));
  }

  const double elapsed = seconds_since(start);
  if (elapsed >= 120.0) o.pass = false;
  o.detail += std::to_string(cases) + " cases, worst relative error " + fmt("%.2e", worst);
  return o;
}

// ------------------------------------------------------------ criterion 2

Outcome oracle_equivalence() {
  const auto start = Clock::now();
  const Shape shape{kSize, kSize, 3};
  const DescriptorParams params;
  const Network hog = build_hog(params, shape);
  const Network hogb = build_hogb(params, shape);
  const Network dsift = build_dsift(params, shape);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Tensor image = random_tensor(shape, 1000 + seed, 40.0);
    worst = std::max(worst, max_abs(hog.forward(image) - hog_oracle(image, params, false)));
    worst = std::max(worst, max_abs(hogb.forward(image) - hog_oracle(image, params, true)));
    worst = std::max(worst, max_abs(dsift.forward(image) - dsift_oracle(image, params)));
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = worst < 1e-10 && elapsed < 60.0;
  o.detail = "50 images x {hog, hogb, dsift}, max abs diff " + fmt("%.2e", worst);
  return o;
}

// -------------------------------------------------------- criteria 3 and 4

struct QualityRuns {
  std::vector<ExperimentReport> reports;  // hog, hogb, dsift
  double seconds = 0.0;
};

ExperimentConfig default_experiment(const std::string& representation) {
  ExperimentConfig config;
  config.representation = representation;
  config.inversion.prior.lambda_tv = 5.0;
  return config;
}

QualityRuns quality_runs() {
  const auto start = Clock::now();
  const ImageSet set = load_image_set(kNatural, kSize);
  QualityRuns runs;
  for (DescriptorType type : {DescriptorType::hog, DescriptorType::hogb, DescriptorType::dsift}) {
    const Network net = build_descriptor(type, {}, set.images.front().shape());
    auto reports = run_experiment(net, net.depth(), set, default_experiment(to_string(type)));
    runs.reports.push_back(std::move(reports.front()));
  }
  runs.seconds = seconds_since(start);
  return runs;
}

Outcome inversion_quality(const QualityRuns& runs) {
  const double hog = runs.reports[0].stats.mean;
  const double hogb = runs.reports[1].stats.mean;
  const double dsift = runs.reports[2].stats.mean;
  Outcome o;
  o.pass = runs.reports[0].rows.size() == 20 && hog > hogb && hog > dsift && std::abs(hogb - dsift) <= 5.0 &&
           runs.seconds < 1800.0;
  o.detail = fmt("mean error %% over 20 crops: hog %.2f, hogb %.2f, dsift %.2f", hog, hogb, dsift);
  return o;
}

Outcome descent(const QualityRuns& runs) {
  Outcome o;
  int total = 0, above = 0, not_monotone = 0;
  double worst = 0.0;
  std::string offenders;
  for (const ExperimentReport& report : runs.reports) {
    for (const ExperimentRow& row : report.rows) {
      ++total;
      worst = std::max(worst, row.data_ratio);
      if (!row.best_nonincreasing) ++not_monotone;
      if (!(row.data_ratio <= 0.1)) {
        ++above;
        offenders += row.representation + "/" + row.image_id + fmt("=%.3f ", row.data_ratio);
      }
    }
  }
  o.pass = above == 0 && not_monotone == 0;
  o.detail = std::to_string(total) + " runs, " + std::to_string(above) + " with data ratio > 0.1 (worst " +
             fmt("%.3f", worst) + "), " + std::to_string(not_monotone) + " non-monotone best-so-far";
  if (!offenders.empty()) o.detail += "; " + offenders;
  return o;
}

// ------------------------------------------------------------ criterion 5

Outcome spike_phenomenon() {
  auto mean_ratio = [](double beta, double& lo, double& hi) {
    double total = 0.0;
    int count = 0;
    lo = INFINITY;
    hi = -INFINITY;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      std::bernoulli_distribution coin(0.5);
      std::vector<double> samples(81);
      for (double& s : samples) s = coin(rng) ? 1.0 : 0.0;
      double lattice_total = 0.0;
      int lattice_count = 0;
      for (double r : segment_jump_ratios(lattice_interpolation(samples, 33, 4, beta, 1e-8, 1000), 4, 0.5)) {
        lattice_total += r;
        ++lattice_count;
      }
      if (lattice_count > 0) {
        lo = std::min(lo, lattice_total / lattice_count);
        hi = std::max(hi, lattice_total / lattice_count);
      }
      total += lattice_total;
      count += lattice_count;
    }
    return count > 0 ? total / count : NAN;
  };
  double lo1, hi1, lo2, hi2;
  const double r1 = mean_ratio(1.0, lo1, hi1);
  const double r2 = mean_ratio(2.0, lo2, hi2);
  Outcome o;
  o.pass = r1 >= 0.9 && r2 <= 0.4;
  o.detail = fmt("max jump / rise pooled over 20 binary lattices: beta=1 %.3f (per lattice %.3f..%.3f), ", r1, lo1, hi1) +
             fmt("beta=2 %.3f (per lattice %.3f..%.3f)", r2, lo2, hi2);
  return o;
}

// ------------------------------------------------------------ criterion 6

Outcome regularizer_trend() {
  const ImageSet set = load_image_set(kNatural, kSize, 3, 4);
  const Network net = build_toy_cnn(1, set.images.front().shape());
  ExperimentConfig config = default_experiment("cnn");
  config.lambda_tv_sweep = {0.5, 5.0};
  auto increase = [&](const std::string& layer, double& low, double& high) {
    const auto reports = run_experiment(net, net.resolve(layer), set, config);
    low = reports[0].stats.mean;
    high = reports[1].stats.mean;
    return (high - low) / low;
  };
  double l1, h1, ld, hd;
  const double first = increase("conv1", l1, h1);
  const double deep = increase("relu3", ld, hd);
  Outcome o;
  o.pass = first > 0.0 && deep <= 0.5 * first;
  o.detail = fmt("lambda_tv 0.5 -> 5 on 4 crops: conv1 %.2f%% -> %.2f%% ", l1, h1) +
             fmt("(%+.1f%%), relu3 %.2f%% -> %.2f%% ", 100.0 * first, ld, hd) + fmt("(%+.1f%%)", 100.0 * deep);
  return o;
}

// ------------------------------------------------------------ criterion 7

Outcome masked_locality() {
  Outcome o;
  const ImageSet set = load_image_set(kNatural, kSize, 3, 4);
  const Network net = build_toy_cnn(1, set.images.front().shape());
  const double sigma = estimate_sigma(set.images);
  double worst = 1.0;
  for (const std::string layer : {"conv2", "norm2"}) {
    const std::size_t k = net.resolve(layer);
    const NeuronWindow window = centered_window(net.shape_at(k), 5, 5);
    const PixelBox box = receptive_field(net, k, window).dilated(2, kSize - 1, kSize - 1);
    for (std::size_t i = 0; i < set.size(); ++i) {
      InversionConfig config;
      config.prior.sigma = sigma;
      config.prior.lambda_tv = 5.0;
      config.prior.lambda_alpha = balance_coefficients(sigma, kSize, kSize, config.prior.bound,
                                                       config.prior.range_ratio, config.prior.alpha,
                                                       config.prior.beta)
                                      .lambda_alpha;
      config.seed = i;
      config.mask = make_spatial_mask(net, k, window);
      const Tensor image = invert(net, k, net.forward(set.images[i], k), config).image();
      double inside = 0.0, total = 0.0;
      for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x)
          for (int c = 0; c < image.channels(); ++c) {
            const double e = image(y, x, c) * image(y, x, c);
            total += e;
            if (box.contains(y, x)) inside += e;
          }
      const double fraction = total > 0.0 ? inside / total : 0.0;
      worst = std::min(worst, fraction);
      if (fraction < 0.95) {
        o.pass = false;
        o.detail += layer + "/" + set.ids[i] + fmt("=%.3f ", fraction);
      }
    }
  }
  o.detail += fmt("min energy fraction in dilated box %.3f (conv2, norm2 x 4 crops); ", worst);

  int mismatches = 0, windows = 0;
  const Network small = build_toy_cnn(4, Shape{32, 32, 3});
  const Tensor base = random_tensor(small.input_shape(), 3);
  for (std::size_t k = 1; k <= small.depth(); ++k) {
    const Shape s = small.shape_at(k);
    for (const NeuronWindow& w : {NeuronWindow{0, 0, 1, 1}, centered_window(s, std::min(2, s.height), std::min(2, s.width))}) {
      ++windows;
      if (!(receptive_field(small, k, w) == testing::perturbation_field(small, k, w, base))) ++mismatches;
    }
  }
  o.detail += std::to_string(windows - mismatches) + "/" + std::to_string(windows) + " fields match the perturbation oracle; ";
  if (mismatches > 0) o.pass = false;

  Network front(Shape{227, 227, 3});
  front.add("conv1", std::make_shared<Conv2d>(FilterBank(11, 11, 3, 1), std::vector<double>{}, 0, 4));
  front.add("relu1", std::make_shared<Relu>());
  front.add("pool1", std::make_shared<MaxPool>(3, 2, 0));
  const int field = receptive_field_size(front, 3);
  o.detail += "conv11/4+pool3/2 field " + std::to_string(field);
  if (field != 19) o.pass = false;
  return o;
}

// ------------------------------------------------------------ criterion 8

std::string trace_text(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out.precision(17);
  for (const TraceRow& r : trace) {
    out << r.iteration << ',' << r.terms.data << ',' << r.terms.alpha << ',' << r.terms.tv << ',' << r.terms.total
        << ',' << r.gradient_inf << '\n';
  }
  return out.str();
}

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Everything one run produces, serialised to bytes.
std::vector<std::string> deterministic_outputs(const std::filesystem::path& dir) {
  std::vector<std::string> out;
  const ImageSet set = load_image_set(kNatural, kSize, 3, 3);

  ExperimentConfig config = default_experiment("hog");
  config.inversion.stages = {{60, 1.0}, {30, 0.1}};
  config.jobs = 2;
  const Network hog = build_hog({}, set.images.front().shape());
  const auto reports = run_experiment(hog, hog.depth(), set, config);
  std::ostringstream csv;
  write_report_csv(csv, reports);
  out.push_back(csv.str());
  for (std::size_t i = 0; i < reports.front().reconstructions.size(); ++i) {
    const auto path = dir / ("hog_" + std::to_string(i) + ".png");
    save_image(reports.front().reconstructions[i], set.mean, path);
    out.push_back(file_bytes(path));
  }

  const Network cnn = build_toy_cnn(1, set.images.front().shape());
  const std::size_t k = cnn.resolve("conv2");
  InversionConfig inv;
  inv.prior.sigma = estimate_sigma(set.images);
  inv.prior.lambda_tv = 5.0;
  inv.prior.lambda_alpha = 1e-3;
  inv.stages = {{60, 1.0}, {30, 0.1}};
  inv.seed = 7;
  inv.mask = make_spatial_mask(cnn, k, centered_window(cnn.shape_at(k), 5, 5));
  const ReconstructionResult r = invert(cnn, k, cnn.forward(set.images[1], k), inv);
  out.push_back(trace_text(r.trace));
  write_tensor(r.image(), dir / "cnn.finv");
  out.push_back(file_bytes(dir / "cnn.finv"));
  save_image(r.image(), set.mean, dir / "cnn.png");
  out.push_back(file_bytes(dir / "cnn.png"));
  return out;
}

Outcome determinism() {
  const auto root = std::filesystem::temp_directory_path() / ("finv_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(root / "a");
  std::filesystem::create_directories(root / "b");
  const auto first = deterministic_outputs(root / "a");
  const auto second = deterministic_outputs(root / "b");
  std::filesystem::remove_all(root);
  Outcome o;
  std::size_t differing = 0;
  for (std::size_t i = 0; i < first.size(); ++i) differing += first[i] != second[i] || first[i].empty();
  o.pass = first.size() == second.size() && differing == 0;
  o.detail = std::to_string(first.size()) + " artifacts (report csv, images, trace, tensor) compared, " +
             std::to_string(differing) + " differ";
  return o;
}

}  // namespace

int main() {
  run(1, gradient_correctness);
  run(2, oracle_equivalence);

  QualityRuns quality;
  std::string quality_error;
  try {
    quality = quality_runs();
  } catch (const std::exception& e) {
    quality_error = e.what();
  }
  if (quality_error.empty()) {
    report(3, inversion_quality(quality), quality.seconds);
    report(4, descent(quality), 0.0);
  } else {
    report(3, {false, "exception: " + quality_error}, 0.0);
    report(4, {false, "exception: " + quality_error}, 0.0);
  }

  run(5, spike_phenomenon);
  run(6, regularizer_trend);
  run(7, masked_locality);
  run(8, determinism);

  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "finv/descriptors.hpp"
#include "finv/eval.hpp"
#include "finv/gradient_check.hpp"
#include "support/temp_dir.hpp"

using namespace finv;
using finv::testing::TempDir;

namespace {

double naive_pairwise_mean(const std::vector<Tensor>& codes) {
  double total = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (std::size_t j = i + 1; j < codes.size(); ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < codes[i].size(); ++k) sq += (codes[i][k] - codes[j][k]) * (codes[i][k] - codes[j][k]);
      total += std::sqrt(sq);
      ++pairs;
    }
  return total / pairs;
}

std::vector<Tensor> random_codes(int n, std::uint64_t seed) {
  std::vector<Tensor> codes;
  for (int i = 0; i < n; ++i) codes.push_back(random_tensor(Shape{3, 2, 4}, seed + i));
  return codes;
}

}  // namespace

TEST_CASE("normalization constant examples") {
  const Tensor a(Shape{1, 1, 2}, std::vector<double>{0, 0});
  const Tensor b(Shape{1, 1, 2}, std::vector<double>{3, 4});
  CHECK(normalization_constant(std::vector<Tensor>{a, b}) == doctest::Approx(5.0));
  CHECK(normalization_constant(std::vector<Tensor>{b, b}) == 0.0);
  CHECK_THROWS_AS(normalization_constant(std::vector<Tensor>{a}), std::invalid_argument);
  CHECK_THROWS(normalization_constant(std::vector<Tensor>{a, Tensor(Shape{1, 1, 3})}));
}

TEST_CASE("normalization constant matches the naive loop and its symmetries") {
  std::vector<Tensor> codes = random_codes(10, 3);
  const double n = normalization_constant(codes);
  CHECK(n == doctest::Approx(naive_pairwise_mean(codes)).epsilon(1e-12));
  std::reverse(codes.begin(), codes.end());
  std::swap(codes[2], codes[7]);
  CHECK(normalization_constant(codes) == doctest::Approx(n).epsilon(1e-12));
  for (Tensor& c : codes) c *= 3.5;
  CHECK(normalization_constant(codes) == doctest::Approx(3.5 * n).epsilon(1e-12));
}

TEST_CASE("normalized error") {
  const Tensor t = random_tensor(Shape{2, 2, 2}, 1);
  CHECK(normalized_error(t, t, 2.0) == 0.0);
  Tensor r = t;
  r[0] += 2.0;
  CHECK(normalized_error(r, t, 2.0) == doctest::Approx(100.0));
  const Tensor u = random_tensor(Shape{2, 2, 2}, 2);
  CHECK(normalized_error(u, t, 0.7) == doctest::Approx(100.0 * norm(u - t) / 0.7));
}

TEST_CASE("error statistics match a two-pass oracle") {
  const std::vector<double> errors = {12.5, 3.0, 7.25, 40.0, 0.5, 18.0};
  double mean = 0.0;
  for (double e : errors) mean += e;
  mean /= errors.size();
  double var = 0.0;
  for (double e : errors) var += (e - mean) * (e - mean);
  var /= errors.size();
  const ErrorStats s = error_stats(errors);
  CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(s.std == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK(error_stats(std::vector<double>{4.0}).std == 0.0);
}

TEST_CASE("best-so-far monotonicity") {
  std::vector<TraceRow> trace(4);
  const double totals[] = {5.0, 6.0, 3.0, 4.0};
  for (int i = 0; i < 4; ++i) trace[i].terms.total = totals[i];
  CHECK(best_so_far_nonincreasing(trace));
  trace[1].terms.total = NAN;
  CHECK_FALSE(best_so_far_nonincreasing(trace));
}

TEST_CASE("image sets are cropped, resized and mean-subtracted") {
  const ImageSet set = load_image_set(FINV_TEST_DATA "/natural", 32, 3, 4);
  REQUIRE(set.size() == 4);
  CHECK(set.ids[0] == "00_astronaut");
  for (const Tensor& im : set.images) CHECK(im.shape() == Shape{32, 32, 3});
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (const Tensor& im : set.images)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) s += im(y, x, c);
    CHECK(std::abs(s) < 1e-6);
  }
  const ImageSet gray = load_image_set(FINV_TEST_DATA "/natural", 16, 1, 2);
  CHECK(gray.images[0].channels() == 1);

  TempDir empty("eval");
  CHECK_THROWS(load_image_set(empty.path(), 32));
}

TEST_CASE("identity network reconstructs exactly") {
  const ImageSet set = load_image_set(FINV_TEST_DATA "/natural", 16, 3, 2);
  const Network net(set.images[0].shape());
  ExperimentConfig config;
  config.representation = "identity";
  config.auto_lambda_alpha = false;
  config.inversion.stages = {{800, 1.0}};
  config.inversion.auto_rate = false;
  config.inversion.stages[0].rate = 0.05;
  for (const auto& images : {set, ImageSet{{set.ids[0]}, {set.images[0]}, set.mean}}) {
    // The loss is relative to ||Phi0||^2, so the rate is scaled accordingly.
    ExperimentConfig c = config;
    c.inversion.stages[0].rate = 0.05 * squared_norm(images.images[0]) / std::pow(estimate_sigma(images.images), 2);
    const auto reports = run_experiment(net, 0, images, c);
    REQUIRE(reports.size() == 1);
    REQUIRE(reports[0].rows.size() == images.size());
    for (const ExperimentRow& row : reports[0].rows) CHECK(row.error_percent < 1e-6);
    CHECK(reports[0].stats.mean < 1e-6);
  }
}

TEST_CASE("experiments are reproducible and independent of the job count") {
  const ImageSet set = load_image_set(FINV_TEST_DATA "/natural", 32, 3, 3);
  const Network net = build_hog({}, set.images[0].shape());
  ExperimentConfig config;
  config.representation = "hog";
  config.inversion.stages = {{20, 1.0}, {10, 0.1}};
  config.lambda_tv_sweep = {0.5, 5.0};
  const auto a = run_experiment(net, net.depth(), set, config);
  config.jobs = 3;
  const auto b = run_experiment(net, net.depth(), set, config);
  REQUIRE(a.size() == 2);
  std::ostringstream ca, cb;
  write_report_csv(ca, a);
  write_report_csv(cb, b);
  CHECK(ca.str() == cb.str());
  for (std::size_t i = 0; i < 3; ++i) CHECK(a[1].reconstructions[i] == b[1].reconstructions[i]);
  CHECK(a[0].rows[0].lambda_tv == 0.5);
  CHECK(a[1].rows[0].lambda_tv == 5.0);
  for (const auto& r : a) {
    std::vector<double> errors;
    for (const auto& row : r.rows) {
      CHECK(row.error_percent >= 0.0);
      errors.push_back(row.error_percent);
    }
    CHECK(error_stats(errors).mean == r.stats.mean);
  }

  const std::string csv = ca.str();
  CHECK(csv.rfind("image_id,representation,lambda_alpha,lambda_vbeta,beta,error_percent,iterations,wall_ms\n", 0) ==
        0);
  CHECK(csv.find("mean+-std,hog,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 4);
}

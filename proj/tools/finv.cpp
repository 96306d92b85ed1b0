// finv: extract, invert and evaluate image representations.
#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "finv/config.hpp"
#include "finv/descriptors.hpp"
#include "finv/eval.hpp"
#include "finv/gradient_check.hpp"
#include "finv/inverter.hpp"
#include "finv/io.hpp"
#include "finv/priors.hpp"

namespace fs = std::filesystem;
using namespace finv;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;

// Images handled by the command line live around this constant mean so
// that a code written by `extract` can be inverted without its image.
constexpr double kImageMean = 128.0;
// Typical per-element standard deviation of mean-subtracted 8-bit natural
// images; sets sigma when only a code is available.
constexpr double kPixelScale = 55.0;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::vector<std::string> settings;
  std::string net, layer, image, code, out, out_dir, mask_window, mask_channels, images;
  std::string lambda_tv, lambda_alpha, sigma, sweep;
  std::int64_t seed = -1;
  int jobs = 0, limit = 0, trials = 20;
  double tol = 1e-4;
  bool timing = false, inject_fault = false;
};

RunConfig effective_config(const Options& o) {
  RunConfig config;
  if (!o.config_path.empty()) config = load_run_config(o.config_path);
  std::vector<std::pair<std::string, std::string>> settings;
  for (const std::string& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + s + "'");
    settings.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  apply_settings(config, settings);
  if (!o.net.empty()) config.net = o.net;
  if (!o.layer.empty()) config.layer = o.layer;
  if (o.seed >= 0) config.inversion.seed = static_cast<std::uint64_t>(o.seed);
  if (!o.lambda_tv.empty()) apply_setting(config, "prior.lambda_tv", o.lambda_tv);
  if (!o.lambda_alpha.empty()) apply_setting(config, "prior.lambda_alpha", o.lambda_alpha);
  if (!o.sigma.empty()) apply_setting(config, "prior.sigma", o.sigma);
  if (!o.images.empty()) config.images = o.images;
  if (!o.sweep.empty()) apply_setting(config, "evaluate.sweep", o.sweep);
  if (o.jobs > 0) config.jobs = o.jobs;
  if (o.limit > 0) config.limit = o.limit;
  if (o.timing) config.timing = true;
  return config;
}

Network make_network(const RunConfig& config, int channels) {
  const Shape input{config.image_size, config.image_size, channels};
  if (config.net == "hog") return build_hog(config.descriptor, input);
  if (config.net == "hogb") return build_hogb(config.descriptor, input);
  if (config.net == "dsift") return build_dsift(config.descriptor, input);
  if (config.net == "cnn") return build_toy_cnn(config.cnn_seed, input);
  if (config.net == "identity") return Network(input);
  if (fs::exists(config.net)) return load_network(config.net);
  throw UsageError("unknown network '" + config.net + "' (hog, hogb, dsift, cnn, identity or a description file)");
}

std::size_t resolve_layer(const Network& net, const std::string& layer) {
  if (layer.empty()) return net.depth();
  try {
    return net.resolve(layer);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

// Loads an image for a network: crop/resize to the network input and move
// it into mean-subtracted space.
Tensor load_input(const std::string& path, const Network& net) {
  Tensor image = load_image(path);
  const Shape& in = net.input_shape();
  if (image.height() != in.height || image.width() != in.width) {
    if (in.height != in.width) throw ShapeError("network input " + in.str() + " is not square");
    image = center_crop_resize(image, in.height);
  }
  if (image.channels() != in.channels) {
    throw ShapeError("image has " + std::to_string(image.channels()) + " channels, network expects " +
                     std::to_string(in.channels));
  }
  return MeanImage::constant(kImageMean, in.channels).subtract_from(std::move(image));
}

int image_channels(const std::string& path) { return load_image(path).channels(); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_trace(const fs::path& path, const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out << "iteration,data,alpha,tv,total,grad_inf\n" << std::setprecision(17);
  for (const TraceRow& r : trace) {
    out << r.iteration << ',' << r.terms.data << ',' << r.terms.alpha << ',' << r.terms.tv << ',' << r.terms.total
        << ',' << r.gradient_inf << '\n';
  }
  write_text(path, out.str());
}

// "5x5@center" or "5x5@3,4" (top-left corner in layer coordinates).
NeuronWindow parse_window(const std::string& text, const Shape& code) {
  const auto at = text.find('@');
  const auto x = text.find('x');
  if (at == std::string::npos || x == std::string::npos || x > at) {
    throw UsageError("--mask-window expects HxW@center or HxW@y,x, got '" + text + "'");
  }
  try {
    const int h = std::stoi(text.substr(0, x));
    const int w = std::stoi(text.substr(x + 1, at - x - 1));
    const std::string where = text.substr(at + 1);
    if (where == "center") return centered_window(code, h, w);
    const auto comma = where.find(',');
    if (comma == std::string::npos) throw UsageError("bad window position '" + where + "'");
    return NeuronWindow{std::stoi(where.substr(0, comma)), std::stoi(where.substr(comma + 1)), h, w};
  } catch (const std::logic_error&) {
    throw UsageError("--mask-window expects HxW@center or HxW@y,x, got '" + text + "'");
  }
}

// "0-15,20,22" -> channel list.
std::vector<int> parse_channels(const std::string& text) {
  std::vector<int> channels;
  std::istringstream in(text);
  std::string item;
  try {
    while (std::getline(in, item, ',')) {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        channels.push_back(std::stoi(item));
      } else {
        const int lo = std::stoi(item.substr(0, dash)), hi = std::stoi(item.substr(dash + 1));
        if (hi < lo) throw UsageError("empty channel range '" + item + "'");
        for (int c = lo; c <= hi; ++c) channels.push_back(c);
      }
    }
  } catch (const std::logic_error&) {
    throw UsageError("--mask-channels expects a list like 0-15,20, got '" + text + "'");
  }
  if (channels.empty()) throw UsageError("--mask-channels selects no channel");
  return channels;
}

// ------------------------------------------------------------------ commands

int cmd_extract(const Options& o) {
  const RunConfig config = effective_config(o);
  const Network net = make_network(config, image_channels(o.image));
  const std::size_t layer = resolve_layer(net, config.layer);
  const Tensor code = net.forward(load_input(o.image, net), layer);
  write_tensor(code, o.out);
  std::cout << "code " << code.shape().str() << " -> " << o.out << '\n';
  return 0;
}

int cmd_invert(const Options& o) {
  if (o.image.empty() == o.code.empty()) throw UsageError("invert needs exactly one of --image or --code");
  RunConfig config = effective_config(o);

  int channels = 3;
  Tensor target, source;
  if (!o.image.empty()) {
    channels = image_channels(o.image);
  } else {
    target = read_tensor(o.code);
  }
  // A code alone does not tell the input channels; descriptors accept any,
  // the CNN and identity nets expect colour unless the code says otherwise.
  if (o.image.empty() && config.net == "identity") channels = target.channels();
  const Network net = make_network(config, channels);
  const std::size_t layer = resolve_layer(net, config.layer);
  if (!o.image.empty()) {
    source = load_input(o.image, net);
    target = net.forward(source, layer);
  }

  InversionConfig inv = config.inversion;
  const Shape& in = net.input_shape();
  if (config.auto_sigma) {
    inv.prior.sigma = o.image.empty() ? kPixelScale * std::sqrt(static_cast<double>(in.size())) : norm(source);
    if (!(inv.prior.sigma > 0.0)) throw std::invalid_argument("image has zero energy; set prior.sigma explicitly");
  }
  if (config.auto_lambda_alpha) {
    const PriorConfig& p = inv.prior;
    inv.prior.lambda_alpha =
        balance_coefficients(p.sigma, in.height, in.width, p.bound, p.range_ratio, p.alpha, p.beta).lambda_alpha;
  }
  if (!o.mask_window.empty()) inv.mask = make_spatial_mask(net, layer, parse_window(o.mask_window, net.shape_at(layer)));
  if (!o.mask_channels.empty()) {
    CodeMask channel_mask = make_channel_mask(net, layer, parse_channels(o.mask_channels));
    inv.mask = inv.mask ? CodeMask(hadamard(inv.mask->weights(), channel_mask.weights())) : channel_mask;
  }

  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  // Echo what actually ran, with the derived values frozen in.
  RunConfig echo = config;
  echo.inversion.prior.sigma = inv.prior.sigma;
  echo.inversion.prior.lambda_alpha = inv.prior.lambda_alpha;
  echo.auto_sigma = echo.auto_lambda_alpha = false;
  write_text(dir / "config.ini", echo.to_ini());

  ReconstructionResult result;
  try {
    result = invert(net, layer, target, inv);
  } catch (const DivergenceError& e) {
    write_trace(dir / "trace.csv", e.trace());
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }

  const Tensor image = result.image();
  const MeanImage mean = MeanImage::constant(kImageMean, in.channels);
  if (in.channels == 1 || in.channels == 3) save_image(image, mean, dir / "reconstruction.png");
  write_tensor(image, dir / "reconstruction.finv");
  write_tensor(net.forward(image, layer) - target, dir / "residual.finv");
  write_trace(dir / "trace.csv", result.trace);

  std::ostringstream summary;
  summary << std::setprecision(17) << "final_data = " << result.final.data << "\ninitial_data = " << result.initial.data
          << "\nfinal_total = " << result.final.total << "\ninitial_total = " << result.initial.total
          << "\niterations = " << result.iterations << "\nbest_iteration = " << result.best_iteration << '\n';
  write_text(dir / "result.txt", summary.str());
  std::cout << "final normalized data term " << result.final.data << " (initial " << result.initial.data << ")\n";
  return 0;
}

// Test fixture for the negative control: a layer whose backward is off by 1%.
class FaultyLayer final : public Layer {
 public:
  explicit FaultyLayer(LayerPtr inner) : inner_(std::move(inner)) {}
  LayerKind kind() const override { return inner_->kind(); }
  Shape output_shape(const Shape& input) const override { return inner_->output_shape(input); }
  Tensor forward(const Tensor& input) const override { return inner_->forward(input); }
  Tensor backward(const Tensor& input, const Tensor& output, const Tensor& grad) const override {
    return inner_->backward(input, output, grad) * 1.01;
  }
  Footprint footprint() const override { return inner_->footprint(); }
  void kink_signature(const Tensor& input, std::vector<std::uint8_t>& out) const override {
    inner_->kink_signature(input, out);
  }

 private:
  LayerPtr inner_;
};

int cmd_gradcheck(const Options& o) {
  RunConfig config = effective_config(o);
  GradCheckOptions opts;
  opts.probes = o.trials;
  opts.seed = config.inversion.seed;
  bool failed = false;
  auto report = [&](const std::string& name, const GradCheckReport& r) {
    const bool ok = r.max_relative_error < o.tol && r.probed == opts.probes;
    failed = failed || !ok;
    std::cout << (ok ? "ok   " : "FAIL ") << std::left << std::setw(18) << name << " max_rel_err "
              << std::scientific << std::setprecision(3) << r.max_relative_error << std::defaultfloat << " probed "
              << r.probed << " skipped " << r.skipped << '\n';
  };

  if (!o.net.empty() && o.net != "all") {
    // Full objective of a built-in network at a small random input.
    if (!fs::exists(config.net)) config.image_size = config.net == "cnn" ? 32 : 40;
    Network net = make_network(config, 3);
    if (o.inject_fault && net.depth() > 0) {
      Network faulty(net.input_shape());
      for (std::size_t k = 1; k <= net.depth(); ++k) {
        faulty.add(net.layer(k).name, k == 1 ? std::make_shared<FaultyLayer>(net.layer(k).layer) : net.layer(k).layer);
      }
      net = faulty;
    }
    const std::size_t layer = resolve_layer(net, config.layer);
    PriorConfig prior = config.inversion.prior;
    prior.sigma = 50.0 * std::sqrt(static_cast<double>(net.input_shape().size()));
    prior.lambda_alpha = 1e3;
    prior.lambda_tv = 1.0;
    const Tensor x0 = random_tensor(net.input_shape(), opts.seed + 1, 1.0 / std::sqrt(net.input_shape().size()));
    const Tensor target = net.forward(random_tensor(net.input_shape(), opts.seed + 2, 50.0), layer);
    const Objective objective(net, layer, target, prior);
    report(config.net + " objective", gradient_check(objective, x0, opts));
  } else {
    for (LayerCase& c : layer_kind_cases(opts.seed)) {
      if (!o.layer.empty() && o.layer != "all" && o.layer != c.name) continue;
      if (o.inject_fault) c.layer = std::make_shared<FaultyLayer>(c.layer);
      GradCheckOptions case_opts = opts;
      case_opts.kink_margin = c.kink_margin;
      report(c.name, gradient_check(*c.layer, c.input, case_opts));
    }
  }
  return failed ? kExitNumeric : 0;
}

int cmd_evaluate(const Options& o) {
  const RunConfig config = effective_config(o);
  if (config.images.empty()) throw UsageError("evaluate needs --images or evaluate.images");
  const ImageSet set = load_image_set(config.images, config.image_size, 3, config.limit);
  const Network net = make_network(config, 3);
  const std::size_t layer = resolve_layer(net, config.layer);

  ExperimentConfig exp;
  exp.representation = config.net == "identity" || fs::exists(config.net) ? fs::path(config.net).stem().string() : config.net;
  exp.inversion = config.inversion;
  exp.auto_sigma = config.auto_sigma;
  exp.auto_lambda_alpha = config.auto_lambda_alpha;
  exp.lambda_tv_sweep = config.sweep;
  exp.jobs = config.jobs;
  exp.timing = config.timing;
  std::vector<ExperimentReport> reports;
  try {
    reports = run_experiment(net, layer, set, exp);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }

  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  write_text(dir / "config.ini", config.to_ini());
  std::ostringstream csv;
  write_report_csv(csv, reports);
  write_text(dir / "report.csv", csv.str());
  for (const ExperimentReport& r : reports) {
    std::cout << r.representation << " lambda_vbeta=" << r.lambda_tv << " mean " << std::fixed << std::setprecision(2)
              << r.stats.mean << "% +- " << r.stats.std << std::defaultfloat << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstruct images from their HOG, DSIFT or CNN codes."};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config_path, "INI run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--set", o.settings, "Override one setting: section.key=value");
    cmd->add_option("--net", o.net, "hog | hogb | dsift | cnn | identity | network description file");
    cmd->add_option("--layer", o.layer, "Layer name or index (default: last)");
    cmd->add_option("--seed", o.seed, "Inversion seed");
  };

  auto* extract = app.add_subcommand("extract", "Write the code of an image");
  common(extract);
  extract->add_option("--image", o.image, "Input image")->required();
  extract->add_option("--out", o.out, "Output tensor file")->required();

  auto* invert_cmd = app.add_subcommand("invert", "Reconstruct an image from a code");
  common(invert_cmd);
  invert_cmd->add_option("--image", o.image, "Image whose code is inverted");
  invert_cmd->add_option("--code", o.code, "Tensor file holding the target code");
  invert_cmd->add_option("--mask-window", o.mask_window, "Restrict the loss to HxW@center or HxW@y,x");
  invert_cmd->add_option("--mask-channels", o.mask_channels, "Restrict the loss to channels, e.g. 0-15");
  invert_cmd->add_option("--lambda-tv", o.lambda_tv, "TV weight");
  invert_cmd->add_option("--lambda-alpha", o.lambda_alpha, "alpha-norm weight or 'auto'");
  invert_cmd->add_option("--sigma", o.sigma, "Image scale or 'auto'");
  invert_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  common(gradcheck);
  gradcheck->add_option("--trials", o.trials, "Probed coordinates per case")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tol", o.tol, "Maximum relative error")->check(CLI::PositiveNumber);
  gradcheck->add_flag("--inject-fault", o.inject_fault)->group("");

  auto* evaluate = app.add_subcommand("evaluate", "Normalised reconstruction error over an image set");
  common(evaluate);
  evaluate->add_option("--images", o.images, "Directory of images");
  evaluate->add_option("--sweep", o.sweep, "Comma-separated TV weights");
  evaluate->add_option("--lambda-tv", o.lambda_tv, "TV weight when not sweeping");
  evaluate->add_option("--jobs", o.jobs, "Parallel inversions")->check(CLI::PositiveNumber);
  evaluate->add_option("--limit", o.limit, "Use at most this many images")->check(CLI::PositiveNumber);
  evaluate->add_flag("--timing", o.timing, "Record wall-clock time per inversion");
  evaluate->add_option("--out-dir", o.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*extract) return cmd_extract(o);
    if (*invert_cmd) return cmd_invert(o);
    if (*gradcheck) return cmd_gradcheck(o);
    if (*evaluate) return cmd_evaluate(o);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

#include "finv/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "finv/io.hpp"

namespace finv {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

double to_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

long long to_integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

int to_int(const std::string& key, const std::string& text) {
  const long long v = to_integer(key, text);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(key + ": value out of range");
  }
  return static_cast<int>(v);
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) out.push_back(to_double(key, part));
  return out;
}

// Shortest text that reads back to the same double.
std::string format(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string join(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + format(values[i]);
  return s;
}

pt::ptree parse_ini(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return tree;
}

// Replaces the stage schedule with new iteration counts and/or rates.
void set_stages(InversionConfig& inv, const std::vector<double>* iterations, const std::vector<double>* rates) {
  std::vector<Stage> stages = inv.stages;
  const std::size_t n = iterations ? iterations->size() : rates->size();
  if (iterations && rates && iterations->size() != rates->size()) {
    throw ConfigError("inversion.iterations and inversion.rates must have the same length");
  }
  if (n == 0) throw ConfigError("the schedule needs at least one stage");
  if (stages.size() != n) {
    if (!iterations || !rates) {
      throw ConfigError("changing the number of stages needs both inversion.iterations and inversion.rates");
    }
    stages.assign(n, Stage{});
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (iterations) {
      const double it = (*iterations)[i];
      if (it < 0 || it != static_cast<int>(it)) throw ConfigError("inversion.iterations must be whole numbers >= 0");
      stages[i].iterations = static_cast<int>(it);
    }
    if (rates) stages[i].rate = (*rates)[i];
  }
  inv.stages = std::move(stages);
}

}  // namespace

void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  if (dot == std::string::npos) throw ConfigError("setting '" + key + "' must look like section.key");
  const std::string section = key.substr(0, dot);
  const std::string name = key.substr(dot + 1);
  const std::string v = trim(value);
  PriorConfig& p = c.inversion.prior;
  DescriptorParams& d = c.descriptor;
  InversionConfig& inv = c.inversion;

  if (section == "run") {
    if (name == "net") c.net = v;
    else if (name == "layer") c.layer = v;
    else if (name == "image_size") c.image_size = to_int(key, v);
    else if (name == "cnn_seed") c.cnn_seed = static_cast<std::uint64_t>(to_integer(key, v));
    else throw ConfigError("unknown setting " + key);
  } else if (section == "descriptor") {
    if (name == "cell_size") d.cell_size = to_int(key, v);
    else if (name == "orientations") d.orientations = to_int(key, v);
    else if (name == "block_size") d.block_size = to_int(key, v);
    else if (name == "clamp") d.clamp = to_double(key, v);
    else if (name == "epsilon") d.epsilon = to_double(key, v);
    else if (name == "uoctti") d.uoctti = to_bool(key, v);
    else if (name == "renormalize") d.renormalize = to_bool(key, v);
    else throw ConfigError("unknown setting " + key);
  } else if (section == "prior") {
    if (name == "alpha") p.alpha = to_double(key, v);
    else if (name == "beta") p.beta = to_double(key, v);
    else if (name == "lambda_alpha") {
      c.auto_lambda_alpha = v == "auto";
      if (!c.auto_lambda_alpha) p.lambda_alpha = to_double(key, v);
    } else if (name == "lambda_tv") p.lambda_tv = to_double(key, v);
    else if (name == "sigma") {
      c.auto_sigma = v == "auto";
      if (!c.auto_sigma) p.sigma = to_double(key, v);
    } else if (name == "bound") p.bound = to_double(key, v);
    else if (name == "range_ratio") p.range_ratio = to_double(key, v);
    else if (name == "tv_epsilon") p.tv_epsilon = to_double(key, v);
    else throw ConfigError("unknown setting " + key);
  } else if (section == "inversion") {
    if (name == "momentum") inv.momentum = to_double(key, v);
    else if (name == "iterations") {
      const auto its = to_doubles(key, v);
      set_stages(inv, &its, nullptr);
    } else if (name == "rates") {
      const auto rates = to_doubles(key, v);
      set_stages(inv, nullptr, &rates);
    } else if (name == "auto_rate") inv.auto_rate = to_bool(key, v);
    else if (name == "step_scale") inv.step_scale = to_double(key, v);
    else if (name == "seed") inv.seed = static_cast<std::uint64_t>(to_integer(key, v));
    else if (name == "init_scale") inv.init_scale = to_double(key, v);
    else if (name == "record_trace") inv.record_trace = to_bool(key, v);
    else if (name == "divergence_factor") inv.divergence_factor = to_double(key, v);
    else throw ConfigError("unknown setting " + key);
  } else if (section == "evaluate") {
    if (name == "images") c.images = v;
    else if (name == "sweep") c.sweep = to_doubles(key, v);
    else if (name == "jobs") c.jobs = to_int(key, v);
    else if (name == "timing") c.timing = to_bool(key, v);
    else if (name == "limit") c.limit = to_int(key, v);
    else throw ConfigError("unknown setting " + key);
  } else {
    throw ConfigError("unknown config section [" + section + "]");
  }
}

void apply_settings(RunConfig& config, const std::vector<std::pair<std::string, std::string>>& settings) {
  const std::string* its = nullptr;
  const std::string* rates = nullptr;
  for (const auto& [key, value] : settings) {
    if (key == "inversion.iterations") its = &value;
    if (key == "inversion.rates") rates = &value;
  }
  if (its && rates) {
    const auto a = to_doubles("inversion.iterations", *its);
    const auto b = to_doubles("inversion.rates", *rates);
    set_stages(config.inversion, &a, &b);
  }
  for (const auto& [key, value] : settings) {
    if (its && rates && (key == "inversion.iterations" || key == "inversion.rates")) continue;
    apply_setting(config, key, value);
  }
}

void apply_ini(RunConfig& config, const std::string& text) {
  const pt::ptree tree = parse_ini(text);
  std::vector<std::pair<std::string, std::string>> settings;
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) throw ConfigError("key '" + section + "' outside any section");
    for (const auto& [key, value] : entries) settings.emplace_back(section + "." + key, value.data());
  }
  apply_settings(config, settings);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  RunConfig config;
  apply_ini(config, buffer.str());
  return config;
}

std::string RunConfig::to_ini() const {
  const PriorConfig& p = inversion.prior;
  std::vector<double> its, rates;
  for (const Stage& s : inversion.stages) {
    its.push_back(s.iterations);
    rates.push_back(s.rate);
  }
  std::ostringstream out;
  out << "[run]\n"
      << "net = " << net << '\n'
      << "layer = " << layer << '\n'
      << "image_size = " << image_size << '\n'
      << "cnn_seed = " << cnn_seed << "\n\n"
      << "[descriptor]\n"
      << "cell_size = " << descriptor.cell_size << '\n'
      << "orientations = " << descriptor.orientations << '\n'
      << "block_size = " << descriptor.block_size << '\n'
      << "clamp = " << format(descriptor.clamp) << '\n'
      << "epsilon = " << format(descriptor.epsilon) << '\n'
      << "uoctti = " << (descriptor.uoctti ? "true" : "false") << '\n'
      << "renormalize = " << (descriptor.renormalize ? "true" : "false") << "\n\n"
      << "[prior]\n"
      << "alpha = " << format(p.alpha) << '\n'
      << "beta = " << format(p.beta) << '\n'
      << "lambda_alpha = " << (auto_lambda_alpha ? std::string("auto") : format(p.lambda_alpha)) << '\n'
      << "lambda_tv = " << format(p.lambda_tv) << '\n'
      << "sigma = " << (auto_sigma ? std::string("auto") : format(p.sigma)) << '\n'
      << "bound = " << format(p.bound) << '\n'
      << "range_ratio = " << format(p.range_ratio) << '\n'
      << "tv_epsilon = " << format(p.tv_epsilon) << "\n\n"
      << "[inversion]\n"
      << "momentum = " << format(inversion.momentum) << '\n'
      << "iterations = " << join(its) << '\n'
      << "rates = " << join(rates) << '\n'
      << "auto_rate = " << (inversion.auto_rate ? "true" : "false") << '\n'
      << "step_scale = " << format(inversion.step_scale) << '\n'
      << "seed = " << inversion.seed << '\n'
      << "init_scale = " << format(inversion.init_scale) << '\n'
      << "record_trace = " << (inversion.record_trace ? "true" : "false") << '\n'
      << "divergence_factor = " << format(inversion.divergence_factor) << "\n\n"
      << "[evaluate]\n"
      << "images = " << images << '\n'
      << "sweep = " << join(sweep) << '\n'
      << "jobs = " << jobs << '\n'
      << "timing = " << (timing ? "true" : "false") << '\n'
      << "limit = " << limit << '\n';
  return out.str();
}

// ------------------------------------------------------------------ networks

Shape parse_shape(const std::string& text) {
  const auto parts = split(text, 'x');
  if (parts.size() != 3) throw ConfigError("expected a shape like 64x64x3, got '" + text + "'");
  Shape s{to_int("shape", parts[0]), to_int("shape", parts[1]), to_int("shape", parts[2])};
  if (s.height <= 0 || s.width <= 0 || s.channels <= 0) throw ConfigError("shape dimensions must be positive");
  return s;
}

namespace {

std::string require(const pt::ptree& section, const std::string& layer, const std::string& key) {
  const auto v = section.get_optional<std::string>(key);
  if (!v) throw ConfigError("layer [" + layer + "] is missing '" + key + "'");
  return *v;
}

std::string optional(const pt::ptree& section, const std::string& key, const std::string& fallback) {
  return section.get<std::string>(key, fallback);
}

LayerPtr make_layer(const std::string& name, const pt::ptree& s, const std::filesystem::path& base) {
  const LayerKind kind = [&] {
    try {
      return layer_kind_from_string(trim(require(s, name, "kind")));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("layer [" + name + "]: " + e.what());
    }
  }();
  auto key = [&](const std::string& k) { return name + "." + k; };
  switch (kind) {
    case LayerKind::conv: {
      const int in = to_int(key("in_channels"), require(s, name, "in_channels"));
      const int out = to_int(key("out_channels"), require(s, name, "out_channels"));
      const Tensor ft = read_tensor(base / require(s, name, "filters"));
      FilterBank filters = FilterBank::from_tensor(ft, in, out);
      std::vector<double> bias;
      if (const auto b = s.get_optional<std::string>("bias")) {
        const Tensor bt = read_tensor(base / *b);
        if (bt.size() != static_cast<std::size_t>(out)) throw ConfigError("layer [" + name + "]: bias size mismatch");
        bias.assign(bt.values().begin(), bt.values().end());
      }
      const int pad = to_int(key("pad"), optional(s, "pad", "0"));
      const int stride = to_int(key("stride"), optional(s, "stride", "1"));
      const int pad_y = to_int(key("pad_y"), optional(s, "pad_y", std::to_string(pad)));
      const int pad_x = to_int(key("pad_x"), optional(s, "pad_x", std::to_string(pad)));
      const int stride_y = to_int(key("stride_y"), optional(s, "stride_y", std::to_string(stride)));
      const int stride_x = to_int(key("stride_x"), optional(s, "stride_x", std::to_string(stride)));
      return std::make_shared<Conv2d>(std::move(filters), std::move(bias), pad_y, pad_x, stride_y, stride_x);
    }
    case LayerKind::relu:
      return std::make_shared<Relu>();
    case LayerKind::maxpool:
      return std::make_shared<MaxPool>(to_int(key("window"), require(s, name, "window")),
                                       to_int(key("stride"), optional(s, "stride", "1")),
                                       to_int(key("pad"), optional(s, "pad", "0")));
    case LayerKind::lrn:
      return std::make_shared<Lrn>(to_int(key("group"), require(s, name, "group")),
                                   to_double(key("kappa"), require(s, name, "kappa")),
                                   to_double(key("alpha"), require(s, name, "alpha")),
                                   to_double(key("beta"), require(s, name, "beta")));
    case LayerKind::bin_bilinear:
    case LayerKind::bin_hard:
    case LayerKind::bin_approx: {
      const BinningMode mode = kind == LayerKind::bin_hard     ? BinningMode::hard
                               : kind == LayerKind::bin_approx ? BinningMode::approx
                                                               : BinningMode::bilinear;
      return std::make_shared<OrientationBinning>(to_int(key("orientations"), require(s, name, "orientations")),
                                                  mode);
    }
    case LayerKind::l2_block_norm: {
      std::vector<int> channels;
      for (const auto& c : split(optional(s, "channels", ""), ',')) channels.push_back(to_int(key("channels"), c));
      return std::make_shared<L2BlockNorm>(to_double(key("epsilon"), require(s, name, "epsilon")),
                                           std::move(channels));
    }
    case LayerKind::clamp:
      return std::make_shared<ClampCeiling>(to_double(key("ceiling"), require(s, name, "ceiling")));
  }
  throw ConfigError("layer [" + name + "]: unsupported kind");
}

}  // namespace

Network parse_network(const std::string& text, const std::filesystem::path& base_dir) {
  const pt::ptree tree = parse_ini(text);
  auto it = tree.begin();
  if (it == tree.end() || it->first != "network") throw ConfigError("network description must start with [network]");
  Network net(parse_shape(require(it->second, "network", "input")));
  for (++it; it != tree.end(); ++it) {
    if (it->second.empty()) throw ConfigError("key '" + it->first + "' outside any layer section");
    try {
      net.add(it->first, make_layer(it->first, it->second, base_dir));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("layer [" + it->first + "]: " + e.what());
    }
  }
  return net;
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read network description " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_network(buffer.str(), path.parent_path());
}

void save_network(const Network& net, const std::filesystem::path& path) {
  const Shape& in = net.input_shape();
  std::ostringstream out;
  out << "[network]\ninput = " << in.height << 'x' << in.width << 'x' << in.channels << '\n';
  const std::string stem = path.stem().string();
  for (const NamedLayer& named : net.layers()) {
    const Layer& layer = *named.layer;
    out << "\n[" << named.name << "]\nkind = " << to_string(layer.kind()) << '\n';
    if (const auto* conv = dynamic_cast<const Conv2d*>(&layer)) {
      const FilterBank& f = conv->filters();
      const std::string filters = stem + "." + named.name + ".filters.finv";
      const std::string bias = stem + "." + named.name + ".bias.finv";
      write_tensor(f.to_tensor(), path.parent_path() / filters);
      write_tensor(Tensor(Shape{1, 1, f.out_channels}, conv->bias()), path.parent_path() / bias);
      out << "in_channels = " << f.in_channels << "\nout_channels = " << f.out_channels << "\nfilters = " << filters
          << "\nbias = " << bias << "\npad_y = " << conv->pad_y() << "\npad_x = " << conv->pad_x()
          << "\nstride_y = " << conv->stride_y() << "\nstride_x = " << conv->stride_x() << '\n';
    } else if (const auto* pool = dynamic_cast<const MaxPool*>(&layer)) {
      out << "window = " << pool->window() << "\nstride = " << pool->stride() << "\npad = " << pool->pad() << '\n';
    } else if (const auto* lrn = dynamic_cast<const Lrn*>(&layer)) {
      out << "group = " << lrn->group_size() << "\nkappa = " << format(lrn->kappa())
          << "\nalpha = " << format(lrn->alpha()) << "\nbeta = " << format(lrn->beta()) << '\n';
    } else if (const auto* bin = dynamic_cast<const OrientationBinning*>(&layer)) {
      out << "orientations = " << bin->orientations() << '\n';
    } else if (const auto* l2 = dynamic_cast<const L2BlockNorm*>(&layer)) {
      out << "epsilon = " << format(l2->epsilon()) << '\n';
      if (!l2->norm_channels().empty()) {
        out << "channels = ";
        for (std::size_t i = 0; i < l2->norm_channels().size(); ++i) out << (i ? "," : "") << l2->norm_channels()[i];
        out << '\n';
      }
    } else if (const auto* clamp = dynamic_cast<const ClampCeiling*>(&layer)) {
      out << "ceiling = " << format(clamp->ceiling()) << '\n';
    }
  }
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path.string());
  file << out.str();
  if (!file) throw IoError("failed writing " + path.string());
}

}  // namespace finv

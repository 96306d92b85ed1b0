#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "finv/descriptors.hpp"
#include "finv/inverter.hpp"
#include "finv/network.hpp"

namespace finv {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run needs besides its input files. Serialised as INI with
/// sections [run], [descriptor], [prior], [inversion] and [evaluate].
struct RunConfig {
  // [run]
  /// hog | hogb | dsift | cnn | identity | path to a network description.
  std::string net = "hog";
  /// Layer name or 1-based index; empty selects the last layer.
  std::string layer;
  int image_size = 64;
  std::uint64_t cnn_seed = 1;

  DescriptorParams descriptor;

  /// inversion.prior.sigma / lambda_alpha are replaced by the image-derived
  /// values when the matching auto flag is set.
  InversionConfig inversion = [] {
    InversionConfig c;
    c.prior.lambda_tv = 5.0;
    return c;
  }();
  bool auto_sigma = true;
  bool auto_lambda_alpha = true;

  // [evaluate]
  std::string images;
  std::vector<double> sweep;
  int jobs = 1;
  bool timing = false;
  int limit = 0;

  std::string to_ini() const;
};

/// Applies the INI text on top of `config`. Unknown sections or keys and
/// malformed values raise ConfigError.
void apply_ini(RunConfig& config, const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies one "section.key" = value assignment.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Applies assignments in order, except that inversion.iterations and
/// inversion.rates, when both present, are applied together so that the
/// schedule may change length.
void apply_settings(RunConfig& config, const std::vector<std::pair<std::string, std::string>>& settings);

/// Network description: a [network] section with `input = HxWxC`, then one
/// section per layer, in order, named after the layer and holding
/// `kind = <layer kind>` plus the kind's parameters. Conv filter banks and
/// biases live in tensor files referenced relative to the description.
Network parse_network(const std::string& text, const std::filesystem::path& base_dir);
Network load_network(const std::filesystem::path& path);

/// Writes the description to `path` and the conv parameters next to it as
/// <stem>.<layer>.filters.finv / <stem>.<layer>.bias.finv.
void save_network(const Network& net, const std::filesystem::path& path);

/// "64x64x3" -> Shape.
Shape parse_shape(const std::string& text);

}  // namespace finv

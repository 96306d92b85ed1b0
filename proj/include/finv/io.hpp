#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "finv/tensor.hpp"

namespace finv {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean image in either per-channel (1x1xC) or per-pixel (HxWxC) form.
/// The optimisation variable lives in mean-subtracted space; the mean is
/// only applied at image load/save.
class MeanImage {
 public:
  MeanImage() = default;
  explicit MeanImage(Tensor values);

  static MeanImage constant(double value, int channels);
  /// Per-channel average over a set of images.
  static MeanImage per_channel(std::span<const Tensor> images);
  /// Pixelwise average; all images must share one shape.
  static MeanImage per_pixel(std::span<const Tensor> images);

  bool is_per_pixel() const { return values_.height() > 1 || values_.width() > 1; }
  bool is_zero() const { return values_.empty(); }
  const Tensor& values() const { return values_; }

  /// Mean value at (y, x, c); an empty mean is zero.
  double at(int y, int x, int c) const;
  void check_compatible(const Shape& image) const;

  Tensor subtract_from(Tensor image) const;
  Tensor add_to(Tensor image) const;

 private:
  Tensor values_;
};

/// Reads an 8-bit grayscale or RGB PNG, PGM or PPM and subtracts `mean`.
Tensor load_image(const std::filesystem::path& path, const MeanImage& mean = {});

/// Adds `mean`, clamps to [0,255], rounds to nearest and writes an 8-bit
/// raster. The format follows the extension: .png, .pgm/.ppm (binary).
void save_image(const Tensor& image, const MeanImage& mean, const std::filesystem::path& path);

/// Binary tensor format: "FINV", u32 version = 1, u32 height, width,
/// channels, then IEEE-754 doubles in channel-fastest order; all little-endian.
void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::string& bytes);

}  // namespace finv

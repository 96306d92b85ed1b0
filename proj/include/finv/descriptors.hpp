#pragma once

#include <cstdint>
#include <string>

#include "finv/network.hpp"
#include "finv/tensor.hpp"

namespace finv {

enum class DescriptorType { hog, hogb, dsift };

std::string to_string(DescriptorType type);

/// Parameters shared by the HOG family and DSIFT. Zero means "use the
/// descriptor's default" (HOG: K=18, 2x2 blocks, eps=1e-4; DSIFT: K=8,
/// 4x4 blocks, eps=1e-12).
struct DescriptorParams {
  int cell_size = 8;
  int orientations = 0;
  int block_size = 0;
  double clamp = 0.2;
  double epsilon = 0.0;
  // HOG: UoCTTI normalisation (factor from the unoriented sums only).
  bool uoctti = true;
  // DSIFT: renormalise after clamping.
  bool renormalize = true;

  DescriptorParams resolved(DescriptorType type) const;
};

/// Crop the centre of `image` so both sides are multiples of `cell_size`.
Tensor crop_to_cells(const Tensor& image, int cell_size);

/// HOG (hard binning) and HOGb (bilinear binning) as layer stacks:
///   gradients -> binning (K oriented) -> bilinear cell pooling ->
///   block forming (oriented + unoriented sums per cell) -> block
///   normalisation -> block-to-cell averaging -> clamp.
/// Output is (H/s) x (W/s) x (K + K/2): per cell the K oriented histogram
/// values followed by the K/2 unoriented ones.
Network build_hog(const DescriptorParams& params, const Shape& input);
Network build_hogb(const DescriptorParams& params, const Shape& input);

/// Dense SIFT: gradients -> bilinear binning (K) -> bilinear cell pooling ->
/// Gaussian-weighted b x b cell blocks -> L2 -> clamp -> L2.
/// Output is (H/s - b + 1) x (W/s - b + 1) x (b*b*K); channel
/// (cy * b + cx) * K + k holds bin k of cell (cy, cx) of the block.
Network build_dsift(const DescriptorParams& params, const Shape& input);

Network build_descriptor(DescriptorType type, const DescriptorParams& params, const Shape& input);

/// Loop-based reference implementations of the same definitions, written
/// without any layer machinery.
Tensor hog_oracle(const Tensor& image, const DescriptorParams& params, bool bilinear = false);
Tensor dsift_oracle(const Tensor& image, const DescriptorParams& params);

/// Pre-normalisation cell histograms used by both oracles: (H/s) x (W/s) x K.
Tensor cell_histograms_oracle(const Tensor& image, int cell_size, int orientations, bool bilinear);

/// Toy CNN made of the same block vocabulary as a classic deep network.
struct ToyCnnSpec {
  int conv1_size = 5;
  int conv1_channels = 16;
  int conv2_size = 5;
  int conv2_channels = 32;
  int pool_window = 2;
  int pool_stride = 2;
  int fc_channels = 64;
  int lrn_group = 4;
  double lrn_kappa = 2.0;
  double lrn_alpha = 1e-4;
  double lrn_beta = 0.75;
};

/// conv1-relu1-pool1-norm1-conv2-relu2-pool2-norm2-fc3-relu3, with fc3 a
/// convolution covering the whole remaining map. Weights are Gaussian with
/// std sqrt(2/fan_in), biases 0.01 * N(0,1), drawn from `seed`.
Network build_toy_cnn(std::uint64_t seed, const Shape& input, const ToyCnnSpec& spec = {});

/// Inclusive pixel box on the network input.
struct PixelBox {
  int y0 = 0, x0 = 0, y1 = -1, x1 = -1;

  int height() const { return y1 - y0 + 1; }
  int width() const { return x1 - x0 + 1; }
  bool contains(int y, int x) const { return y >= y0 && y <= y1 && x >= x0 && x <= x1; }
  PixelBox dilated(int margin, int max_y, int max_x) const;
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Window of neurons in the spatial coordinates of a layer's output.
struct NeuronWindow {
  int y0 = 0, x0 = 0, height = 1, width = 1;
};

/// `height` x `width` window centred in a `shape`-sized map.
NeuronWindow centered_window(const Shape& shape, int height, int width);

/// Input pixels that can influence the neurons of `window` at layer
/// `layer`, composing each layer's (size, stride, pad) backwards and
/// clipping to the valid extent at every level.
PixelBox receptive_field(const Network& net, std::size_t layer, const NeuronWindow& window);

/// Unclipped receptive field size of one neuron at `layer` (per axis).
int receptive_field_size(const Network& net, std::size_t layer);

}  // namespace finv

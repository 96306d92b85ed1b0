#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "finv/tensor.hpp"

namespace finv {

enum class LayerKind {
  conv,
  relu,
  maxpool,
  lrn,
  bin_bilinear,
  bin_hard,
  bin_approx,
  l2_block_norm,
  clamp,
};

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// Spatial footprint of one output neuron on the layer input, per axis.
/// Pointwise layers have size 1, stride 1, pad 0.
struct Footprint {
  int size_y = 1, size_x = 1;
  int stride_y = 1, stride_x = 1;
  int pad_y = 0, pad_x = 0;
};

/// A differentiable block. Layers are immutable once built; forward and
/// backward are pure functions of their arguments.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  /// Throws ShapeError when `input` is not a valid input shape.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor forward(const Tensor& input) const = 0;
  /// Gradient w.r.t. the input given the gradient w.r.t. the output.
  /// `output` must be forward(input).
  virtual Tensor backward(const Tensor& input, const Tensor& output, const Tensor& grad_output) const = 0;

  virtual Footprint footprint() const { return {}; }

  /// Discrete signature of the piecewise regime the input sits in (ReLU
  /// gates, pooling winners, bin memberships). Two inputs with equal
  /// signatures lie in the same smooth piece. Smooth layers return nothing.
  virtual void kink_signature(const Tensor& input, std::vector<std::uint8_t>& out) const {
    (void)input;
    (void)out;
  }
};

using LayerPtr = std::shared_ptr<const Layer>;

/// Dense 4-D filter bank indexed (out, ky, kx, in).
struct FilterBank {
  int size_y = 0;
  int size_x = 0;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weights;

  FilterBank() = default;
  FilterBank(int size_y, int size_x, int in_channels, int out_channels);

  std::size_t index(int oc, int ky, int kx, int ic) const {
    return ((static_cast<std::size_t>(oc) * size_y + ky) * size_x + kx) * in_channels + ic;
  }
  double& at(int oc, int ky, int kx, int ic) { return weights[index(oc, ky, kx, ic)]; }
  double at(int oc, int ky, int kx, int ic) const { return weights[index(oc, ky, kx, ic)]; }

  /// Tensor form used by the binary format: size_y x size_x x (out*in),
  /// channel index = oc * in_channels + ic.
  Tensor to_tensor() const;
  static FilterBank from_tensor(const Tensor& t, int in_channels, int out_channels);

  friend bool operator==(const FilterBank&, const FilterBank&) = default;
};

/// Linear convolution (cross-correlation) with zero padding.
class Conv2d final : public Layer {
 public:
  Conv2d(FilterBank filters, std::vector<double> bias, int pad, int stride);
  Conv2d(FilterBank filters, std::vector<double> bias, int pad_y, int pad_x, int stride_y, int stride_x);

  LayerKind kind() const override { return LayerKind::conv; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input) const override;
  Tensor backward(const Tensor& input, const Tensor& output, const Tensor& grad_output) const override;
  Footprint footprint() const override;

  const FilterBank& filters() const { return filters_; }
  const std::vector<double>& bias() const { return bias_; }
  int pad_y() const { return pad_y_; }
  int pad_x() const { return pad_x_; }
  int stride_y() const { return stride_y_; }
  int stride_x() const { return stride_x_; }

 private:
  struct Tap {
    int ky, kx, ic;
    double w;
  };

  FilterBank filters_;
  std::vector<double> bias_;
  int pad_y_, pad_x_, stride_y_, stride_x_;
  // Nonzero weights grouped per output channel; the descriptor filter banks
  // are mostly zeros.
  std::vector<std::vector<Tap>> taps_;
};

class Relu final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input) const override;
  Tensor backward(const Tensor& input, const Tensor& output, const Tensor& grad_output) const override;
  void kink_signature(const Tensor& input, std::vector<std::uint8_t>& out) const override;
};

/// Max pooling with -inf padding. Ties go to the first element in
/// row-major scan order of the window.
class MaxPool final : public Layer {
 public:
  MaxPool(int window, int stride, int pad);

  LayerKind kind() const override { return LayerKind::maxpool; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input) const override;
  Tensor backward(const Tensor& input, const Tensor& output, const Tensor& grad_output) const override;
  Footprint footprint() const override;
  void kink_signature(const Tensor& input, std::vector<std::uint8_t>& out) const override;

  int window() const { return window_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }

  /// Input offset (y * W + x) of the winner of every output element; the
  /// padding never wins.
  std::vector<std::size_t> argmax(const Tensor& input) const;

 private:
  int window_, stride_, pad_;
};

/// Group normalisation y_i = x_i (kappa + alpha * sum_{j in group(i)} x_j^2)^(-beta)
/// over consecutive channel groups of `group_size` at each pixel.
class Lrn final : public Layer {
 public:
  Lrn(int group_size, double kappa, double alpha, double beta);

  LayerKind kind() const override { return LayerKind::lrn; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input) const override;
  Tensor backward(const Tensor& input, const Tensor& output, const Tensor& grad_output) const override;

  int group_size() const { return group_size_; }
  double kappa() const { return kappa_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

 private:
  int group_size_;
  double kappa_, alpha_, beta_;
};

enum class BinningMode { bilinear, hard, approx };

/// Orientation gating. Input has K+2 channels per pixel: the K directional
/// projections <g, u_k> followed by the gradient (gx, gy); output has K.
///   bilinear: h_k = |g| max{0, 1 - K/(2 pi) acos(<g,u_k>/|g|)}
///   hard:     h_k = |g| [<g,u_k> > |g| cos(pi/K)]
///   approx:   h_k = max{0, <g,u_k> - a|g|} / (1 - a),  a = cos(2 pi/K)
/// A zero gradient produces zero bins and zero derivative.
class OrientationBinning final : public Layer {
 public:
  OrientationBinning(int orientations, BinningMode mode);

  LayerKind kind() const override;
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input) const override;
  Tensor backward(const Tensor& input, const Tensor& output, const Tensor& grad_output) const override;
  void kink_signature(const Tensor& input, std::vector<std::uint8_t>& out) const override;

  int orientations() const { return orientations_; }
  BinningMode mode() const { return mode_; }

 private:
  int orientations_;
  BinningMode mode_;
  std::vector<double> cos_, sin_;
};

/// Block L2 normalisation y_i = x_i / sqrt(eps + sum_{j in S} x_j^2) over all
/// channels of a pixel, where S is a subset of the channels (all by default).
/// With S a strict subset this is the UoCTTI HOG variant.
class L2BlockNorm final : public Layer {
 public:
  explicit L2BlockNorm(double epsilon, std::vector<int> norm_channels = {});

  LayerKind kind() const override { return LayerKind::l2_block_norm; }
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input) const override;
  Tensor backward(const Tensor& input, const Tensor& output, const Tensor& grad_output) const override;

  double epsilon() const { return epsilon_; }
  /// Empty means every channel.
  const std::vector<int>& norm_channels() const { return norm_channels_; }

 private:
  std::vector<int> resolved_channels(int channels) const;

  double epsilon_;
  std::vector<int> norm_channels_;
};

/// y = min(x, ceiling).
class ClampCeiling final : public Layer {
 public:
  explicit ClampCeiling(double ceiling);

  LayerKind kind() const override { return LayerKind::clamp; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input) const override;
  Tensor backward(const Tensor& input, const Tensor& output, const Tensor& grad_output) const override;
  void kink_signature(const Tensor& input, std::vector<std::uint8_t>& out) const override;

  double ceiling() const { return ceiling_; }

 private:
  double ceiling_;
};

/// Stacks gx, gy into the K+2 layout and applies OrientationBinning.
Tensor directional_bin(const Tensor& gx, const Tensor& gy, int orientations, BinningMode mode);

/// Unit orientation u_k = (cos 2 pi k/K, sin 2 pi k/K).
double orientation_cos(int k, int orientations);
double orientation_sin(int k, int orientations);

/// 3x3 directional filter bank producing K projections followed by gx, gy.
/// gx = x(u, v+1) - x(u, v-1), gy = x(u+1, v) - x(u-1, v); with several
/// input channels the channels are averaged first.
FilterBank directional_filters(int orientations, int in_channels);

}  // namespace finv

#include "finv/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace finv {

namespace {

int pooled_extent(int input, int pad, int size, int stride) {
  return (input + 2 * pad - size) / stride + 1;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::lrn: return "lrn";
    case LayerKind::bin_bilinear: return "binning-bilinear";
    case LayerKind::bin_hard: return "binning-hard";
    case LayerKind::bin_approx: return "binning-approx";
    case LayerKind::l2_block_norm: return "l2-block-norm";
    case LayerKind::clamp: return "clamp";
  }
  return "?";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (LayerKind k : {LayerKind::conv, LayerKind::relu, LayerKind::maxpool, LayerKind::lrn,
                      LayerKind::bin_bilinear, LayerKind::bin_hard, LayerKind::bin_approx,
                      LayerKind::l2_block_norm, LayerKind::clamp}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- FilterBank

FilterBank::FilterBank(int size_y, int size_x, int in_channels, int out_channels)
    : size_y(size_y), size_x(size_x), in_channels(in_channels), out_channels(out_channels) {
  if (size_y <= 0 || size_x <= 0 || in_channels <= 0 || out_channels <= 0) {
    throw ShapeError("filter bank dimensions must be positive");
  }
  weights.assign(static_cast<std::size_t>(size_y) * size_x * in_channels * out_channels, 0.0);
}

Tensor FilterBank::to_tensor() const {
  Tensor t(Shape{size_y, size_x, in_channels * out_channels});
  for (int oc = 0; oc < out_channels; ++oc)
    for (int ky = 0; ky < size_y; ++ky)
      for (int kx = 0; kx < size_x; ++kx)
        for (int ic = 0; ic < in_channels; ++ic) t(ky, kx, oc * in_channels + ic) = at(oc, ky, kx, ic);
  return t;
}

FilterBank FilterBank::from_tensor(const Tensor& t, int in_channels, int out_channels) {
  if (in_channels <= 0 || out_channels <= 0 || t.channels() != in_channels * out_channels) {
    throw ShapeError("filter tensor " + t.shape().str() + " does not hold " + std::to_string(out_channels) +
                     " filters of " + std::to_string(in_channels) + " channels");
  }
  FilterBank bank(t.height(), t.width(), in_channels, out_channels);
  for (int oc = 0; oc < out_channels; ++oc)
    for (int ky = 0; ky < bank.size_y; ++ky)
      for (int kx = 0; kx < bank.size_x; ++kx)
        for (int ic = 0; ic < in_channels; ++ic) bank.at(oc, ky, kx, ic) = t(ky, kx, oc * in_channels + ic);
  return bank;
}

// -------------------------------------------------------------------- Conv2d

Conv2d::Conv2d(FilterBank filters, std::vector<double> bias, int pad, int stride)
    : Conv2d(std::move(filters), std::move(bias), pad, pad, stride, stride) {}

Conv2d::Conv2d(FilterBank filters, std::vector<double> bias, int pad_y, int pad_x, int stride_y, int stride_x)
    : filters_(std::move(filters)),
      bias_(std::move(bias)),
      pad_y_(pad_y),
      pad_x_(pad_x),
      stride_y_(stride_y),
      stride_x_(stride_x) {
  if (filters_.weights.empty()) throw std::invalid_argument("conv needs a non-empty filter bank");
  if (stride_y_ < 1 || stride_x_ < 1) throw std::invalid_argument("conv stride must be >= 1");
  if (pad_y_ < 0 || pad_x_ < 0) throw std::invalid_argument("conv padding must be >= 0");
  if (bias_.empty()) bias_.assign(filters_.out_channels, 0.0);
  if (static_cast<int>(bias_.size()) != filters_.out_channels) {
    throw std::invalid_argument("conv bias has " + std::to_string(bias_.size()) + " entries for " +
                                std::to_string(filters_.out_channels) + " filters");
  }
  taps_.resize(filters_.out_channels);
  for (int oc = 0; oc < filters_.out_channels; ++oc)
    for (int ky = 0; ky < filters_.size_y; ++ky)
      for (int kx = 0; kx < filters_.size_x; ++kx)
        for (int ic = 0; ic < filters_.in_channels; ++ic) {
          const double w = filters_.at(oc, ky, kx, ic);
          if (w != 0.0) taps_[oc].push_back({ky, kx, ic, w});
        }
}

Shape Conv2d::output_shape(const Shape& input) const {
  if (input.channels != filters_.in_channels) {
    throw ShapeError("conv expects " + std::to_string(filters_.in_channels) + " input channels, got " +
                     input.str());
  }
  if (input.height + 2 * pad_y_ < filters_.size_y || input.width + 2 * pad_x_ < filters_.size_x) {
    throw ShapeError("conv filter " + std::to_string(filters_.size_y) + "x" + std::to_string(filters_.size_x) +
                     " larger than padded input " + input.str());
  }
  return Shape{pooled_extent(input.height, pad_y_, filters_.size_y, stride_y_),
               pooled_extent(input.width, pad_x_, filters_.size_x, stride_x_), filters_.out_channels};
}

Footprint Conv2d::footprint() const {
  return Footprint{filters_.size_y, filters_.size_x, stride_y_, stride_x_, pad_y_, pad_x_};
}

Tensor Conv2d::forward(const Tensor& input) const {
  const Shape out_shape = output_shape(input.shape());
  Tensor out(out_shape);
  const int H = input.height(), W = input.width(), C = input.channels();
  // Flat input offsets of each tap relative to the window origin.
  std::vector<std::vector<std::ptrdiff_t>> offsets(taps_.size());
  for (std::size_t oc = 0; oc < taps_.size(); ++oc)
    for (const Tap& t : taps_[oc])
      offsets[oc].push_back((static_cast<std::ptrdiff_t>(t.ky) * W + t.kx) * C + t.ic);

  for (int oy = 0; oy < out_shape.height; ++oy) {
    const int y0 = oy * stride_y_ - pad_y_;
    const bool inside_y = y0 >= 0 && y0 + filters_.size_y <= H;
    for (int ox = 0; ox < out_shape.width; ++ox) {
      const int x0 = ox * stride_x_ - pad_x_;
      const bool inside = inside_y && x0 >= 0 && x0 + filters_.size_x <= W;
      double* dst = out.pixel(oy, ox);
      for (std::size_t oc = 0; oc < taps_.size(); ++oc) {
        double acc = bias_[oc];
        const std::vector<Tap>& taps = taps_[oc];
        if (inside) {
          const double* base = input.pixel(y0, x0);
          const std::vector<std::ptrdiff_t>& off = offsets[oc];
          for (std::size_t i = 0; i < taps.size(); ++i) acc += taps[i].w * base[off[i]];
        } else {
          for (const Tap& t : taps) {
            const int iy = y0 + t.ky, ix = x0 + t.kx;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            acc += t.w * input(iy, ix, t.ic);
          }
        }
        dst[oc] = acc;
      }
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& input, const Tensor& /*output*/, const Tensor& grad_output) const {
  const Shape out_shape = output_shape(input.shape());
  if (grad_output.shape() != out_shape) throw ShapeError("conv backward: gradient shape mismatch");
  Tensor grad(input.shape());
  const int H = input.height(), W = input.width(), C = input.channels();
  std::vector<std::vector<std::ptrdiff_t>> offsets(taps_.size());
  for (std::size_t oc = 0; oc < taps_.size(); ++oc)
    for (const Tap& t : taps_[oc])
      offsets[oc].push_back((static_cast<std::ptrdiff_t>(t.ky) * W + t.kx) * C + t.ic);

  for (int oy = 0; oy < out_shape.height; ++oy) {
    const int y0 = oy * stride_y_ - pad_y_;
    const bool inside_y = y0 >= 0 && y0 + filters_.size_y <= H;
    for (int ox = 0; ox < out_shape.width; ++ox) {
      const int x0 = ox * stride_x_ - pad_x_;
      const bool inside = inside_y && x0 >= 0 && x0 + filters_.size_x <= W;
      const double* g = grad_output.pixel(oy, ox);
      for (std::size_t oc = 0; oc < taps_.size(); ++oc) {
        const double go = g[oc];
        if (go == 0.0) continue;
        const std::vector<Tap>& taps = taps_[oc];
        if (inside) {
          double* base = grad.pixel(y0, x0);
          const std::vector<std::ptrdiff_t>& off = offsets[oc];
          for (std::size_t i = 0; i < taps.size(); ++i) base[off[i]] += taps[i].w * go;
        } else {
          for (const Tap& t : taps) {
            const int iy = y0 + t.ky, ix = x0 + t.kx;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            grad(iy, ix, t.ic) += t.w * go;
          }
        }
      }
    }
  }
  return grad;
}

// ---------------------------------------------------------------------- Relu

Tensor Relu::forward(const Tensor& input) const {
  Tensor out = input;
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

Tensor Relu::backward(const Tensor& input, const Tensor& /*output*/, const Tensor& grad_output) const {
  require_same_shape(input, grad_output, "relu backward");
  Tensor grad = grad_output;
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(input[i] > 0.0)) grad[i] = 0.0;
  return grad;
}

void Relu::kink_signature(const Tensor& input, std::vector<std::uint8_t>& out) const {
  for (double v : input.values()) out.push_back(v > 0.0);
}

// ------------------------------------------------------------------- MaxPool

MaxPool::MaxPool(int window, int stride, int pad) : window_(window), stride_(stride), pad_(pad) {
  if (window < 1 || stride < 1) throw std::invalid_argument("maxpool window and stride must be >= 1");
  if (pad < 0 || pad >= window) throw std::invalid_argument("maxpool padding must be in [0, window)");
}

Shape MaxPool::output_shape(const Shape& input) const {
  if (input.height + 2 * pad_ < window_ || input.width + 2 * pad_ < window_) {
    throw ShapeError("maxpool window " + std::to_string(window_) + " larger than padded input " + input.str());
  }
  return Shape{pooled_extent(input.height, pad_, window_, stride_),
               pooled_extent(input.width, pad_, window_, stride_), input.channels};
}

Footprint MaxPool::footprint() const { return Footprint{window_, window_, stride_, stride_, pad_, pad_}; }

std::vector<std::size_t> MaxPool::argmax(const Tensor& input) const {
  const Shape out_shape = output_shape(input.shape());
  const int H = input.height(), W = input.width(), C = input.channels();
  std::vector<std::size_t> winners(out_shape.size());
  for (int oy = 0; oy < out_shape.height; ++oy) {
    const int y0 = oy * stride_ - pad_;
    const int ya = std::max(y0, 0), yb = std::min(y0 + window_, H);
    for (int ox = 0; ox < out_shape.width; ++ox) {
      const int x0 = ox * stride_ - pad_;
      const int xa = std::max(x0, 0), xb = std::min(x0 + window_, W);
      for (int c = 0; c < C; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t where = static_cast<std::size_t>(ya) * W + xa;
        for (int y = ya; y < yb; ++y)
          for (int x = xa; x < xb; ++x) {
            const double v = input(y, x, c);
            if (v > best) {
              best = v;
              where = static_cast<std::size_t>(y) * W + x;
            }
          }
        winners[(static_cast<std::size_t>(oy) * out_shape.width + ox) * C + c] = where;
      }
    }
  }
  return winners;
}

Tensor MaxPool::forward(const Tensor& input) const {
  const Shape out_shape = output_shape(input.shape());
  const std::vector<std::size_t> winners = argmax(input);
  Tensor out(out_shape);
  const int C = input.channels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = input[winners[i] * C + i % C];
  }
  return out;
}

Tensor MaxPool::backward(const Tensor& input, const Tensor& /*output*/, const Tensor& grad_output) const {
  if (grad_output.shape() != output_shape(input.shape())) {
    throw ShapeError("maxpool backward: gradient shape mismatch");
  }
  const std::vector<std::size_t> winners = argmax(input);
  Tensor grad(input.shape());
  const int C = input.channels();
  for (std::size_t i = 0; i < grad_output.size(); ++i) {
    grad[winners[i] * C + i % C] += grad_output[i];
  }
  return grad;
}

void MaxPool::kink_signature(const Tensor& input, std::vector<std::uint8_t>& out) const {
  for (std::size_t w : argmax(input)) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(w >> (8 * b)));
  }
}

// ----------------------------------------------------------------------- Lrn

Lrn::Lrn(int group_size, double kappa, double alpha, double beta)
    : group_size_(group_size), kappa_(kappa), alpha_(alpha), beta_(beta) {
  if (group_size < 1) throw std::invalid_argument("lrn group size must be >= 1");
  if (kappa < 0 || alpha < 0 || beta < 0) throw std::invalid_argument("lrn constants must be nonnegative");
}

Shape Lrn::output_shape(const Shape& input) const {
  if (input.channels % group_size_ != 0) {
    throw ShapeError("lrn group size " + std::to_string(group_size_) + " does not divide " +
                     std::to_string(input.channels) + " channels");
  }
  return input;
}

Tensor Lrn::forward(const Tensor& input) const {
  output_shape(input.shape());
  Tensor out(input.shape());
  const int C = input.channels();
  const std::size_t pixels = static_cast<std::size_t>(input.height()) * input.width();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* x = input.values().data() + p * C;
    double* y = out.values().data() + p * C;
    for (int g = 0; g < C; g += group_size_) {
      double energy = 0.0;
      for (int j = g; j < g + group_size_; ++j) energy += x[j] * x[j];
      const double denom = kappa_ + alpha_ * energy;
      const double scale = denom > 0.0 ? std::pow(denom, -beta_) : 0.0;
      for (int j = g; j < g + group_size_; ++j) y[j] = x[j] * scale;
    }
  }
  return out;
}

Tensor Lrn::backward(const Tensor& input, const Tensor& /*output*/, const Tensor& grad_output) const {
  require_same_shape(input, grad_output, "lrn backward");
  Tensor grad(input.shape());
  const int C = input.channels();
  const std::size_t pixels = static_cast<std::size_t>(input.height()) * input.width();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* x = input.values().data() + p * C;
    const double* gy = grad_output.values().data() + p * C;
    double* gx = grad.values().data() + p * C;
    for (int g = 0; g < C; g += group_size_) {
      double energy = 0.0, proj = 0.0;
      for (int j = g; j < g + group_size_; ++j) {
        energy += x[j] * x[j];
        proj += gy[j] * x[j];
      }
      const double denom = kappa_ + alpha_ * energy;
      if (!(denom > 0.0)) continue;
      const double scale = std::pow(denom, -beta_);
      const double coupling = 2.0 * alpha_ * beta_ * scale / denom * proj;
      for (int j = g; j < g + group_size_; ++j) gx[j] = gy[j] * scale - coupling * x[j];
    }
  }
  return grad;
}

// -------------------------------------------------------- OrientationBinning

double orientation_cos(int k, int orientations) {
  return std::cos(2.0 * std::numbers::pi * k / orientations);
}

double orientation_sin(int k, int orientations) {
  return std::sin(2.0 * std::numbers::pi * k / orientations);
}

OrientationBinning::OrientationBinning(int orientations, BinningMode mode)
    : orientations_(orientations), mode_(mode) {
  if (orientations < 2) throw std::invalid_argument("binning needs at least 2 orientations");
  for (int k = 0; k < orientations; ++k) {
    cos_.push_back(orientation_cos(k, orientations));
    sin_.push_back(orientation_sin(k, orientations));
  }
}

LayerKind OrientationBinning::kind() const {
  switch (mode_) {
    case BinningMode::bilinear: return LayerKind::bin_bilinear;
    case BinningMode::hard: return LayerKind::bin_hard;
    case BinningMode::approx: return LayerKind::bin_approx;
  }
  return LayerKind::bin_bilinear;
}

Shape OrientationBinning::output_shape(const Shape& input) const {
  if (input.channels != orientations_ + 2) {
    throw ShapeError("binning with K=" + std::to_string(orientations_) + " expects K+2 channels, got " +
                     input.str());
  }
  return Shape{input.height, input.width, orientations_};
}

Tensor OrientationBinning::forward(const Tensor& input) const {
  const Shape out_shape = output_shape(input.shape());
  Tensor out(out_shape);
  const int K = orientations_;
  const double bin_rate = K / (2.0 * std::numbers::pi);
  const double hard_cos = std::cos(std::numbers::pi / K);
  const double approx_a = std::cos(2.0 * std::numbers::pi / K);
  const std::size_t pixels = static_cast<std::size_t>(input.height()) * input.width();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* in = input.values().data() + p * (K + 2);
    double* h = out.values().data() + p * K;
    const double r = std::hypot(in[K], in[K + 1]);
    if (r == 0.0) continue;
    for (int k = 0; k < K; ++k) {
      const double proj = in[k];
      switch (mode_) {
        case BinningMode::bilinear: {
          const double c = std::clamp(proj / r, -1.0, 1.0);
          h[k] = r * std::max(0.0, 1.0 - bin_rate * std::acos(c));
          break;
        }
        case BinningMode::hard:
          h[k] = proj > r * hard_cos ? r : 0.0;
          break;
        case BinningMode::approx:
          h[k] = std::max(0.0, proj - approx_a * r) / (1.0 - approx_a);
          break;
      }
    }
  }
  return out;
}

Tensor OrientationBinning::backward(const Tensor& input, const Tensor& /*output*/,
                                    const Tensor& grad_output) const {
  if (grad_output.shape() != output_shape(input.shape())) {
    throw ShapeError("binning backward: gradient shape mismatch");
  }
  Tensor grad(input.shape());
  const int K = orientations_;
  const double bin_rate = K / (2.0 * std::numbers::pi);
  const double hard_cos = std::cos(std::numbers::pi / K);
  const double approx_a = std::cos(2.0 * std::numbers::pi / K);
  const std::size_t pixels = static_cast<std::size_t>(input.height()) * input.width();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* in = input.values().data() + p * (K + 2);
    const double* gh = grad_output.values().data() + p * K;
    double* gin = grad.values().data() + p * (K + 2);
    const double gx = in[K], gy = in[K + 1];
    const double r = std::hypot(gx, gy);
    if (r == 0.0) continue;
    double d_r = 0.0;  // accumulated dL/dr with projections held fixed
    for (int k = 0; k < K; ++k) {
      const double proj = in[k];
      switch (mode_) {
        case BinningMode::bilinear: {
          const double raw = proj / r;
          const double c = std::clamp(raw, -1.0, 1.0);
          const double t = 1.0 - bin_rate * std::acos(c);
          if (t <= 0.0) break;
          d_r += gh[k] * t;
          const double s = std::sqrt(1.0 - c * c);
          if (raw > -1.0 && raw < 1.0 && s > 0.0) {
            // d acos(p/r) = -(dp/r - p dr/r^2) / s
            const double slope = bin_rate / s;
            gin[k] += gh[k] * slope;
            d_r -= gh[k] * slope * c;
          }
          break;
        }
        case BinningMode::hard:
          if (proj > r * hard_cos) d_r += gh[k];
          break;
        case BinningMode::approx:
          if (proj - approx_a * r > 0.0) {
            gin[k] += gh[k] / (1.0 - approx_a);
            d_r -= gh[k] * approx_a / (1.0 - approx_a);
          }
          break;
      }
    }
    gin[K] += d_r * gx / r;
    gin[K + 1] += d_r * gy / r;
  }
  return grad;
}

void OrientationBinning::kink_signature(const Tensor& input, std::vector<std::uint8_t>& out) const {
  const int K = orientations_;
  const double bin_rate = K / (2.0 * std::numbers::pi);
  const double hard_cos = std::cos(std::numbers::pi / K);
  const double approx_a = std::cos(2.0 * std::numbers::pi / K);
  const std::size_t pixels = static_cast<std::size_t>(input.height()) * input.width();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* in = input.values().data() + p * (K + 2);
    const double gx = in[K], gy = in[K + 1];
    const double r = std::hypot(gx, gy);
    out.push_back(r > 0.0);
    for (int k = 0; k < K; ++k) {
      switch (mode_) {
        case BinningMode::bilinear: {
          const double raw = in[k] / std::max(r, 1e-300);
          const double c = std::clamp(raw, -1.0, 1.0);
          const bool active = 1.0 - bin_rate * std::acos(c) > 0.0;
          // side of the bin centre: |angle| has a corner there, and the
          // projection channel alone reaches it through the clipped cosine
          const bool side = cos_[k] * gy - sin_[k] * gx > 0.0;
          const bool clipped = raw >= 1.0 || raw <= -1.0;
          out.push_back(static_cast<std::uint8_t>(active | (side << 1) | (clipped << 2)));
          break;
        }
        case BinningMode::hard:
          out.push_back(in[k] > r * hard_cos);
          break;
        case BinningMode::approx:
          out.push_back(in[k] - approx_a * r > 0.0);
          break;
      }
    }
  }
}

Tensor directional_bin(const Tensor& gx, const Tensor& gy, int orientations, BinningMode mode) {
  require_same_shape(gx, gy, "directional_bin");
  if (gx.channels() != 1) throw ShapeError("directional_bin expects single-channel gradients");
  Tensor stacked(Shape{gx.height(), gx.width(), orientations + 2});
  for (int y = 0; y < gx.height(); ++y)
    for (int x = 0; x < gx.width(); ++x) {
      const double a = gx(y, x, 0), b = gy(y, x, 0);
      for (int k = 0; k < orientations; ++k)
        stacked(y, x, k) = orientation_cos(k, orientations) * a + orientation_sin(k, orientations) * b;
      stacked(y, x, orientations) = a;
      stacked(y, x, orientations + 1) = b;
    }
  return OrientationBinning(orientations, mode).forward(stacked);
}

FilterBank directional_filters(int orientations, int in_channels) {
  FilterBank bank(3, 3, in_channels, orientations + 2);
  const double share = 1.0 / in_channels;
  auto set_gradient = [&](int oc, double wx, double wy) {
    for (int ic = 0; ic < in_channels; ++ic) {
      bank.at(oc, 1, 0, ic) += -wx * share;
      bank.at(oc, 1, 2, ic) += wx * share;
      bank.at(oc, 0, 1, ic) += -wy * share;
      bank.at(oc, 2, 1, ic) += wy * share;
    }
  };
  for (int k = 0; k < orientations; ++k) {
    set_gradient(k, orientation_cos(k, orientations), orientation_sin(k, orientations));
  }
  set_gradient(orientations, 1.0, 0.0);
  set_gradient(orientations + 1, 0.0, 1.0);
  return bank;
}

// --------------------------------------------------------------- L2BlockNorm

L2BlockNorm::L2BlockNorm(double epsilon, std::vector<int> norm_channels)
    : epsilon_(epsilon), norm_channels_(std::move(norm_channels)) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("l2 norm epsilon must be >= 0");
  std::sort(norm_channels_.begin(), norm_channels_.end());
  norm_channels_.erase(std::unique(norm_channels_.begin(), norm_channels_.end()), norm_channels_.end());
}

std::vector<int> L2BlockNorm::resolved_channels(int channels) const {
  if (norm_channels_.empty()) {
    std::vector<int> all(channels);
    for (int c = 0; c < channels; ++c) all[c] = c;
    return all;
  }
  return norm_channels_;
}

Shape L2BlockNorm::output_shape(const Shape& input) const {
  if (!norm_channels_.empty() && (norm_channels_.front() < 0 || norm_channels_.back() >= input.channels)) {
    throw ShapeError("l2 norm channel subset exceeds input " + input.str());
  }
  return input;
}

Tensor L2BlockNorm::forward(const Tensor& input) const {
  output_shape(input.shape());
  const std::vector<int> subset = resolved_channels(input.channels());
  Tensor out(input.shape());
  const int C = input.channels();
  const std::size_t pixels = static_cast<std::size_t>(input.height()) * input.width();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* x = input.values().data() + p * C;
    double* y = out.values().data() + p * C;
    double energy = epsilon_;
    for (int j : subset) energy += x[j] * x[j];
    if (!(energy > 0.0)) continue;
    const double scale = 1.0 / std::sqrt(energy);
    for (int c = 0; c < C; ++c) y[c] = x[c] * scale;
  }
  return out;
}

Tensor L2BlockNorm::backward(const Tensor& input, const Tensor& /*output*/, const Tensor& grad_output) const {
  require_same_shape(input, grad_output, "l2 norm backward");
  const std::vector<int> subset = resolved_channels(input.channels());
  Tensor grad(input.shape());
  const int C = input.channels();
  const std::size_t pixels = static_cast<std::size_t>(input.height()) * input.width();
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* x = input.values().data() + p * C;
    const double* gy = grad_output.values().data() + p * C;
    double* gx = grad.values().data() + p * C;
    double energy = epsilon_;
    for (int j : subset) energy += x[j] * x[j];
    if (!(energy > 0.0)) continue;
    const double scale = 1.0 / std::sqrt(energy);
    double proj = 0.0;
    for (int c = 0; c < C; ++c) {
      proj += gy[c] * x[c];
      gx[c] = gy[c] * scale;
    }
    const double coupling = proj * scale / energy;
    for (int j : subset) gx[j] -= coupling * x[j];
  }
  return grad;
}

// -------------------------------------------------------------- ClampCeiling

ClampCeiling::ClampCeiling(double ceiling) : ceiling_(ceiling) {}

Tensor ClampCeiling::forward(const Tensor& input) const {
  Tensor out = input;
  for (double& v : out.values()) v = std::min(v, ceiling_);
  return out;
}

Tensor ClampCeiling::backward(const Tensor& input, const Tensor& /*output*/, const Tensor& grad_output) const {
  require_same_shape(input, grad_output, "clamp backward");
  Tensor grad = grad_output;
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(input[i] < ceiling_)) grad[i] = 0.0;
  return grad;
}

void ClampCeiling::kink_signature(const Tensor& input, std::vector<std::uint8_t>& out) const {
  for (double v : input.values()) out.push_back(v < ceiling_);
}

}  // namespace finv

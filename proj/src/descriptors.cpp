#include "finv/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace finv {

std::string to_string(DescriptorType type) {
  switch (type) {
    case DescriptorType::hog: return "hog";
    case DescriptorType::hogb: return "hogb";
    case DescriptorType::dsift: return "dsift";
  }
  return "?";
}

DescriptorParams DescriptorParams::resolved(DescriptorType type) const {
  DescriptorParams p = *this;
  const bool sift = type == DescriptorType::dsift;
  if (p.orientations == 0) p.orientations = sift ? 8 : 18;
  if (p.block_size == 0) p.block_size = sift ? 4 : 2;
  if (p.epsilon == 0.0) p.epsilon = sift ? 1e-12 : 1e-4;
  if (p.cell_size < 2 || p.cell_size % 2 != 0) {
    throw std::invalid_argument("cell size must be even and >= 2, got " + std::to_string(p.cell_size));
  }
  if (p.orientations < 2) throw std::invalid_argument("need at least 2 orientations");
  if (!sift && p.orientations % 2 != 0) {
    throw std::invalid_argument("HOG needs an even orientation count to form unoriented bins");
  }
  if (p.block_size < 1) throw std::invalid_argument("block size must be >= 1");
  return p;
}

Tensor crop_to_cells(const Tensor& image, int cell_size) {
  const int h = image.height() / cell_size * cell_size;
  const int w = image.width() / cell_size * cell_size;
  if (h == image.height() && w == image.width()) return image;
  const int y0 = (image.height() - h) / 2, x0 = (image.width() - w) / 2;
  Tensor out(Shape{h, w, image.channels()});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < image.channels(); ++c) out(y, x, c) = image(y0 + y, x0 + x, c);
  return out;
}

namespace {

void check_geometry(const DescriptorParams& p, const Shape& input) {
  if (input.height % p.cell_size != 0 || input.width % p.cell_size != 0) {
    throw ShapeError("image " + input.str() + " is not a whole number of " + std::to_string(p.cell_size) +
                     "-pixel cells; crop it first");
  }
  if (input.channels < 1) throw ShapeError("image needs at least one channel");
  const int cells_y = input.height / p.cell_size, cells_x = input.width / p.cell_size;
  if (cells_y < p.block_size || cells_x < p.block_size) {
    throw ShapeError("image " + input.str() + " too small for one " + std::to_string(p.block_size) + "x" +
                     std::to_string(p.block_size) + " block of cells");
  }
}

// Triangular weight of a pixel at signed distance d from a cell centre.
double cell_weight(double d, int cell) { return std::max(0.0, 1.0 - std::abs(d) / cell); }

// Gradient layer: 3x3 directional filters with no padding, so the border
// pixels (where the central difference is undefined) carry no gradient.
LayerPtr gradient_layer(int orientations, int channels) {
  return std::make_shared<Conv2d>(directional_filters(orientations, channels), std::vector<double>{}, 0, 1);
}

// Bilinear spatial pooling of the (H-2)x(W-2) binned map into cells. Output
// cell c gathers gradient rows cs - s/2 - 1 ... cs + 3s/2 - 2 (pixel rows
// cs - s/2 ... cs + 3s/2 - 1) weighted by distance to the cell centre.
LayerPtr cell_pooling_layer(int orientations, int cell) {
  const int size = 2 * cell;
  FilterBank bank(size, size, orientations, orientations);
  for (int ky = 0; ky < size; ++ky) {
    const double wy = cell_weight(ky - cell + 0.5, cell);
    for (int kx = 0; kx < size; ++kx) {
      const double wx = cell_weight(kx - cell + 0.5, cell);
      for (int k = 0; k < orientations; ++k) bank.at(k, ky, kx, k) = wy * wx;
    }
  }
  return std::make_shared<Conv2d>(std::move(bank), std::vector<double>{}, cell / 2 + 1, cell);
}

Network build_hog_family(const DescriptorParams& raw, const Shape& input, DescriptorType type) {
  const DescriptorParams p = raw.resolved(type);
  check_geometry(p, input);
  const int K = p.orientations, half = K / 2, per_cell = K + half, b = p.block_size;
  const int block_channels = b * b * per_cell;

  Network net(input);
  net.add("gradients", gradient_layer(K, input.channels));
  net.add("binning", std::make_shared<OrientationBinning>(
                         K, type == DescriptorType::hog ? BinningMode::hard : BinningMode::bilinear));
  net.add("cells", cell_pooling_layer(K, p.cell_size));

  // Block (bi, bj) covers cells bi-b+1..bi, bj-b+1..bj (zero outside).
  FilterBank forming(b, b, K, block_channels);
  for (int dy = 0; dy < b; ++dy)
    for (int dx = 0; dx < b; ++dx) {
      const int base = (dy * b + dx) * per_cell;
      for (int k = 0; k < K; ++k) forming.at(base + k, dy, dx, k) = 1.0;
      for (int k = 0; k < half; ++k) {
        forming.at(base + K + k, dy, dx, k) = 1.0;
        forming.at(base + K + k, dy, dx, k + half) = 1.0;
      }
    }
  net.add("blocks", std::make_shared<Conv2d>(std::move(forming), std::vector<double>{}, b - 1, 1));

  std::vector<int> norm_channels;
  if (p.uoctti) {
    for (int pos = 0; pos < b * b; ++pos)
      for (int k = 0; k < half; ++k) norm_channels.push_back(pos * per_cell + K + k);
  }
  net.add("normalize", std::make_shared<L2BlockNorm>(p.epsilon, std::move(norm_channels)));

  // Cell (i, j) sits at position (b-1-dy, b-1-dx) of block (i+dy, j+dx).
  FilterBank decompose(b, b, block_channels, per_cell);
  const double share = 1.0 / (b * b);
  for (int dy = 0; dy < b; ++dy)
    for (int dx = 0; dx < b; ++dx) {
      const int base = ((b - 1 - dy) * b + (b - 1 - dx)) * per_cell;
      for (int c = 0; c < per_cell; ++c) decompose.at(c, dy, dx, base + c) = share;
    }
  net.add("decompose", std::make_shared<Conv2d>(std::move(decompose), std::vector<double>{}, 0, 1));
  net.add("clamp", std::make_shared<ClampCeiling>(p.clamp));
  return net;
}

double gaussian_cell_weight(int dy, int dx, int block) {
  const double centre = (block - 1) / 2.0;
  const double sigma = block / 2.0;
  const double ry = dy - centre, rx = dx - centre;
  return std::exp(-(ry * ry + rx * rx) / (2.0 * sigma * sigma));
}

}  // namespace

Network build_hog(const DescriptorParams& params, const Shape& input) {
  return build_hog_family(params, input, DescriptorType::hog);
}

Network build_hogb(const DescriptorParams& params, const Shape& input) {
  return build_hog_family(params, input, DescriptorType::hogb);
}

Network build_dsift(const DescriptorParams& raw, const Shape& input) {
  const DescriptorParams p = raw.resolved(DescriptorType::dsift);
  check_geometry(p, input);
  const int K = p.orientations, b = p.block_size, dims = b * b * K;

  Network net(input);
  net.add("gradients", gradient_layer(K, input.channels));
  net.add("binning", std::make_shared<OrientationBinning>(K, BinningMode::bilinear));
  net.add("cells", cell_pooling_layer(K, p.cell_size));

  FilterBank forming(b, b, K, dims);
  for (int dy = 0; dy < b; ++dy)
    for (int dx = 0; dx < b; ++dx) {
      const double w = gaussian_cell_weight(dy, dx, b);
      for (int k = 0; k < K; ++k) forming.at((dy * b + dx) * K + k, dy, dx, k) = w;
    }
  net.add("blocks", std::make_shared<Conv2d>(std::move(forming), std::vector<double>{}, 0, 1));
  net.add("normalize", std::make_shared<Lrn>(dims, p.epsilon, 1.0, 0.5));
  net.add("clamp", std::make_shared<ClampCeiling>(p.clamp));
  if (p.renormalize) net.add("renormalize", std::make_shared<Lrn>(dims, p.epsilon, 1.0, 0.5));
  return net;
}

Network build_descriptor(DescriptorType type, const DescriptorParams& params, const Shape& input) {
  switch (type) {
    case DescriptorType::hog: return build_hog(params, input);
    case DescriptorType::hogb: return build_hogb(params, input);
    case DescriptorType::dsift: return build_dsift(params, input);
  }
  throw std::invalid_argument("unknown descriptor type");
}

// ------------------------------------------------------------------ oracles

Tensor cell_histograms_oracle(const Tensor& image, int cell, int orientations, bool bilinear) {
  const int H = image.height(), W = image.width(), C = image.channels();
  const int cells_y = H / cell, cells_x = W / cell;
  Tensor hist(Shape{cells_y, cells_x, orientations});
  auto gray = [&](int y, int x) {
    double s = 0.0;
    for (int c = 0; c < C; ++c) s += image(y, x, c);
    return s / C;
  };
  const double two_pi = 2.0 * std::numbers::pi;
  const double centre_offset = (cell - 1) / 2.0;
  for (int y = 1; y + 1 < H; ++y) {
    for (int x = 1; x + 1 < W; ++x) {
      const double gx = gray(y, x + 1) - gray(y, x - 1);
      const double gy = gray(y + 1, x) - gray(y - 1, x);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx);
      if (angle < 0) angle += two_pi;
      const double pos = angle / two_pi * orientations;

      double bins[2] = {0.0, 0.0};
      int bin_index[2] = {0, 0};
      if (bilinear) {
        const int k0 = static_cast<int>(std::floor(pos));
        const double frac = pos - k0;
        bin_index[0] = k0 % orientations;
        bin_index[1] = (k0 + 1) % orientations;
        bins[0] = mag * (1.0 - frac);
        bins[1] = mag * frac;
      } else {
        bin_index[0] = static_cast<int>(std::lround(pos)) % orientations;
        bins[0] = mag;
      }

      // Spread to the (up to) two nearest cell centres per axis.
      const double uy = (y - centre_offset) / cell, ux = (x - centre_offset) / cell;
      const int cy0 = static_cast<int>(std::floor(uy)), cx0 = static_cast<int>(std::floor(ux));
      for (int cy = cy0; cy <= cy0 + 1; ++cy) {
        if (cy < 0 || cy >= cells_y) continue;
        const double wy = cell_weight(y - (cy * cell + centre_offset), cell);
        for (int cx = cx0; cx <= cx0 + 1; ++cx) {
          if (cx < 0 || cx >= cells_x) continue;
          const double wx = cell_weight(x - (cx * cell + centre_offset), cell);
          for (int i = 0; i < 2; ++i) hist(cy, cx, bin_index[i]) += wy * wx * bins[i];
        }
      }
    }
  }
  return hist;
}

Tensor hog_oracle(const Tensor& image, const DescriptorParams& raw, bool bilinear) {
  const DescriptorParams p = raw.resolved(bilinear ? DescriptorType::hogb : DescriptorType::hog);
  check_geometry(p, image.shape());
  const int K = p.orientations, half = K / 2, b = p.block_size;
  const Tensor hist = cell_histograms_oracle(image, p.cell_size, K, bilinear);
  const int cells_y = hist.height(), cells_x = hist.width();

  // Unoriented histograms.
  Tensor unoriented(Shape{cells_y, cells_x, half});
  for (int y = 0; y < cells_y; ++y)
    for (int x = 0; x < cells_x; ++x)
      for (int k = 0; k < half; ++k) unoriented(y, x, k) = hist(y, x, k) + hist(y, x, k + half);

  // Normalisation factor of block (by, bx), which covers cells by-b+1..by.
  Tensor factor(Shape{cells_y + b - 1, cells_x + b - 1, 1});
  for (int by = 0; by < factor.height(); ++by)
    for (int bx = 0; bx < factor.width(); ++bx) {
      double energy = p.epsilon;
      for (int cy = by - b + 1; cy <= by; ++cy)
        for (int cx = bx - b + 1; cx <= bx; ++cx) {
          if (cy < 0 || cx < 0 || cy >= cells_y || cx >= cells_x) continue;
          for (int k = 0; k < half; ++k) energy += unoriented(cy, cx, k) * unoriented(cy, cx, k);
          if (!p.uoctti)
            for (int k = 0; k < K; ++k) energy += hist(cy, cx, k) * hist(cy, cx, k);
        }
      factor(by, bx, 0) = 1.0 / std::sqrt(energy);
    }

  Tensor out(Shape{cells_y, cells_x, K + half});
  const double share = 1.0 / (b * b);
  for (int y = 0; y < cells_y; ++y)
    for (int x = 0; x < cells_x; ++x) {
      for (int by = y; by < y + b; ++by)
        for (int bx = x; bx < x + b; ++bx) {
          const double f = factor(by, bx, 0) * share;
          for (int k = 0; k < K; ++k) out(y, x, k) += f * hist(y, x, k);
          for (int k = 0; k < half; ++k) out(y, x, K + k) += f * unoriented(y, x, k);
        }
      for (int c = 0; c < K + half; ++c) out(y, x, c) = std::min(out(y, x, c), p.clamp);
    }
  return out;
}

Tensor dsift_oracle(const Tensor& image, const DescriptorParams& raw) {
  const DescriptorParams p = raw.resolved(DescriptorType::dsift);
  check_geometry(p, image.shape());
  const int K = p.orientations, b = p.block_size, dims = b * b * K;
  const Tensor hist = cell_histograms_oracle(image, p.cell_size, K, true);
  const int out_y = hist.height() - b + 1, out_x = hist.width() - b + 1;
  Tensor out(Shape{out_y, out_x, dims});
  std::vector<double> d(dims);
  auto normalise = [&]() {
    double energy = p.epsilon;
    for (double v : d) energy += v * v;
    const double scale = 1.0 / std::sqrt(energy);
    for (double& v : d) v *= scale;
  };
  for (int by = 0; by < out_y; ++by)
    for (int bx = 0; bx < out_x; ++bx) {
      for (int cy = 0; cy < b; ++cy)
        for (int cx = 0; cx < b; ++cx) {
          const double w = gaussian_cell_weight(cy, cx, b);
          for (int k = 0; k < K; ++k) d[(cy * b + cx) * K + k] = w * hist(by + cy, bx + cx, k);
        }
      normalise();
      for (double& v : d) v = std::min(v, p.clamp);
      if (p.renormalize) normalise();
      for (int i = 0; i < dims; ++i) out(by, bx, i) = d[i];
    }
  return out;
}

// ------------------------------------------------------------------ toy CNN

Network build_toy_cnn(std::uint64_t seed, const Shape& input, const ToyCnnSpec& spec) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto make_conv = [&](int size_y, int size_x, int in, int out) {
    FilterBank bank(size_y, size_x, in, out);
    const double scale = std::sqrt(2.0 / (size_y * size_x * in));
    for (double& w : bank.weights) w = scale * normal(rng);
    std::vector<double> bias(out);
    for (double& v : bias) v = 0.01 * normal(rng);
    return std::make_shared<Conv2d>(std::move(bank), std::move(bias), 0, 1);
  };
  auto make_lrn = [&] {
    return std::make_shared<Lrn>(spec.lrn_group, spec.lrn_kappa, spec.lrn_alpha, spec.lrn_beta);
  };

  Network net(input);
  net.add("conv1", make_conv(spec.conv1_size, spec.conv1_size, input.channels, spec.conv1_channels));
  net.add("relu1", std::make_shared<Relu>());
  net.add("pool1", std::make_shared<MaxPool>(spec.pool_window, spec.pool_stride, 0));
  net.add("norm1", make_lrn());
  net.add("conv2", make_conv(spec.conv2_size, spec.conv2_size, spec.conv1_channels, spec.conv2_channels));
  net.add("relu2", std::make_shared<Relu>());
  net.add("pool2", std::make_shared<MaxPool>(spec.pool_window, spec.pool_stride, 0));
  net.add("norm2", make_lrn());
  const Shape map = net.shape_at(net.depth());
  net.add("fc3", make_conv(map.height, map.width, spec.conv2_channels, spec.fc_channels));
  net.add("relu3", std::make_shared<Relu>());
  return net;
}

// ---------------------------------------------------------- receptive field

PixelBox PixelBox::dilated(int margin, int max_y, int max_x) const {
  return PixelBox{std::max(0, y0 - margin), std::max(0, x0 - margin), std::min(max_y - 1, y1 + margin),
                  std::min(max_x - 1, x1 + margin)};
}

NeuronWindow centered_window(const Shape& shape, int height, int width) {
  if (height > shape.height || width > shape.width || height < 1 || width < 1) {
    throw ShapeError("window " + std::to_string(height) + "x" + std::to_string(width) + " does not fit " +
                     shape.str());
  }
  return NeuronWindow{(shape.height - height) / 2, (shape.width - width) / 2, height, width};
}

PixelBox receptive_field(const Network& net, std::size_t layer, const NeuronWindow& window) {
  const Shape at = net.shape_at(layer);
  if (window.y0 < 0 || window.x0 < 0 || window.height < 1 || window.width < 1 ||
      window.y0 + window.height > at.height || window.x0 + window.width > at.width) {
    throw ShapeError("neuron window outside layer output " + at.str());
  }
  int y0 = window.y0, y1 = window.y0 + window.height - 1;
  int x0 = window.x0, x1 = window.x0 + window.width - 1;
  for (std::size_t k = layer; k > 0; --k) {
    const Footprint f = net.layer(k).layer->footprint();
    const Shape in = net.shape_at(k - 1);
    y0 = std::max(0, y0 * f.stride_y - f.pad_y);
    y1 = std::min(in.height - 1, y1 * f.stride_y - f.pad_y + f.size_y - 1);
    x0 = std::max(0, x0 * f.stride_x - f.pad_x);
    x1 = std::min(in.width - 1, x1 * f.stride_x - f.pad_x + f.size_x - 1);
  }
  return PixelBox{y0, x0, y1, x1};
}

int receptive_field_size(const Network& net, std::size_t layer) {
  if (layer > net.depth()) throw std::out_of_range("layer beyond network depth");
  int size = 1;
  for (std::size_t k = layer; k > 0; --k) {
    const Footprint f = net.layer(k).layer->footprint();
    size = (size - 1) * f.stride_y + f.size_y;
  }
  return size;
}

}  // namespace finv

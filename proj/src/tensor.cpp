#include "finv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace finv {

std::string Shape::str() const {
  std::ostringstream os;
  os << height << "x" << width << "x" << channels;
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  if (shape.height < 0 || shape.width < 0 || shape.channels < 0) {
    throw ShapeError("negative tensor dimension " + shape.str());
  }
  data_.assign(shape.size(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (shape.height < 0 || shape.width < 0 || shape.channels < 0) {
    throw ShapeError("negative tensor dimension " + shape.str());
  }
  if (data_.size() != shape.size()) {
    throw ShapeError("tensor " + shape.str() + " given " + std::to_string(data_.size()) + " values");
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + a.shape().str() + " vs " + b.shape().str());
  }
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "tensor -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor& Tensor::add_scaled(const Tensor& other, double s) {
  require_same_shape(*this, other, "tensor add_scaled");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
  return *this;
}

double sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return s;
}

double norm(const Tensor& t) { return std::sqrt(squared_norm(t)); }

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor center_crop_resize(const Tensor& image, int size) {
  if (size <= 0) throw ShapeError("resize target must be positive");
  const int side = std::min(image.height(), image.width());
  if (side <= 0) throw ShapeError("cannot crop an empty image");
  const int y0 = (image.height() - side) / 2;
  const int x0 = (image.width() - side) / 2;
  const int channels = image.channels();
  Tensor out(Shape{size, size, channels});
  const double scale = static_cast<double>(side) / size;
  auto sample = [&](double pos, int& i0, int& i1, double& f) {
    pos = std::clamp(pos, 0.0, static_cast<double>(side - 1));
    i0 = static_cast<int>(std::floor(pos));
    i1 = std::min(i0 + 1, side - 1);
    f = pos - i0;
  };
  for (int y = 0; y < size; ++y) {
    int ya, yb;
    double fy;
    sample((y + 0.5) * scale - 0.5, ya, yb, fy);
    for (int x = 0; x < size; ++x) {
      int xa, xb;
      double fx;
      sample((x + 0.5) * scale - 0.5, xa, xb, fx);
      for (int c = 0; c < channels; ++c) {
        const double top = (1 - fx) * image(y0 + ya, x0 + xa, c) + fx * image(y0 + ya, x0 + xb, c);
        const double bot = (1 - fx) * image(y0 + yb, x0 + xa, c) + fx * image(y0 + yb, x0 + xb, c);
        out(y, x, c) = (1 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

Tensor channel(const Tensor& t, int c) {
  if (c < 0 || c >= t.channels()) throw ShapeError("channel index out of range");
  Tensor out(Shape{t.height(), t.width(), 1});
  for (int y = 0; y < t.height(); ++y)
    for (int x = 0; x < t.width(); ++x) out(y, x, 0) = t(y, x, c);
  return out;
}

Tensor stack_channels(std::span<const Tensor> planes) {
  if (planes.empty()) return {};
  const Shape base = planes.front().shape();
  for (const Tensor& p : planes) {
    if (p.channels() != 1 || p.height() != base.height || p.width() != base.width) {
      throw ShapeError("stack_channels needs single-channel planes of one spatial size");
    }
  }
  const int channels = static_cast<int>(planes.size());
  Tensor out(Shape{base.height, base.width, channels});
  for (int y = 0; y < base.height; ++y)
    for (int x = 0; x < base.width; ++x)
      for (int c = 0; c < channels; ++c) out(y, x, c) = planes[c](y, x, 0);
  return out;
}

}  // namespace finv

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace finv {

/// Height x width x channels. A code whose spatial dims collapse is 1x1xC.
struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense H x W x C array of doubles, row-major with the channel index
/// fastest, so all channels of one pixel are contiguous.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(shape_.width) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(shape_.channels) +
           static_cast<std::size_t>(c);
  }
  double& operator()(int y, int x, int c) { return data_[index(y, x, c)]; }
  double operator()(int y, int x, int c) const { return data_[index(y, x, c)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the `channels()` contiguous values of pixel (y, x).
  double* pixel(int y, int x) { return data_.data() + index(y, x, 0); }
  const double* pixel(int y, int x) const { return data_.data() + index(y, x, 0); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);
  /// this += s * other
  Tensor& add_scaled(const Tensor& other, double s);

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

double sum(const Tensor& t);
double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& t);
double norm(const Tensor& t);
double max_abs(const Tensor& t);
bool all_finite(const Tensor& t);

/// Elementwise product.
Tensor hadamard(const Tensor& a, const Tensor& b);

/// Crop the central square and resample it to size x size with bilinear
/// interpolation (pixel centers aligned).
Tensor center_crop_resize(const Tensor& image, int size);

/// Extract channel `c` as a single-channel tensor.
Tensor channel(const Tensor& t, int c);

/// Stack single-channel tensors of equal spatial shape along the channel axis.
Tensor stack_channels(std::span<const Tensor> planes);

}  // namespace finv

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "finv/layers.hpp"
#include "finv/tensor.hpp"

namespace finv {

/// Per-evaluation activation cache. Owned by the caller so that one Network
/// can serve many concurrent inversions.
class Activations {
 public:
  bool ready() const { return ready_; }
  std::size_t depth() const { return values_.empty() ? 0 : values_.size() - 1; }
  /// Activation after `k` layers; 0 is the network input.
  const Tensor& at(std::size_t k) const { return values_.at(k); }

 private:
  friend class Network;
  std::vector<Tensor> values_;
  bool ready_ = false;
};

struct NamedLayer {
  std::string name;
  LayerPtr layer;
};

/// A representation as an ordered composition of layers with a declared
/// input shape. Layer `k` (1-based) is addressable by name or index; the
/// code "at layer k" is the output of the first k layers.
class Network {
 public:
  Network() = default;
  explicit Network(Shape input_shape);

  Network& add(std::string name, LayerPtr layer);

  const Shape& input_shape() const { return input_shape_; }
  std::size_t depth() const { return layers_.size(); }
  const NamedLayer& layer(std::size_t k) const { return layers_.at(k - 1); }
  const std::vector<NamedLayer>& layers() const { return layers_; }

  /// 1-based index of a layer given its name or decimal index; 0 and ""
  /// mean the input.
  std::size_t resolve(const std::string& name_or_index) const;

  /// Shape after `k` layers.
  Shape shape_at(std::size_t k) const;

  /// Evaluates the first `stop` layers. When `cache` is given, every
  /// intermediate activation is stored for a later backward().
  Tensor forward(const Tensor& x, std::size_t stop, Activations* cache = nullptr) const;
  Tensor forward(const Tensor& x) const { return forward(x, depth()); }

  /// Back-propagates `grad_code` through the layers recorded in `cache` and
  /// consumes the cache. Throws std::logic_error if no forward is cached.
  Tensor backward(Activations& cache, const Tensor& grad_code) const;

  /// Concatenated kink signatures of all layers up to `stop`.
  std::vector<std::uint8_t> kink_signature(const Tensor& x, std::size_t stop) const;

  /// Same network truncated after `stop` layers.
  Network truncated(std::size_t stop) const;

 private:
  void check_input(const Tensor& x) const;

  Shape input_shape_;
  std::vector<NamedLayer> layers_;
};

}  // namespace finv

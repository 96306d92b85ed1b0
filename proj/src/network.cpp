#include "finv/network.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

namespace finv {

Network::Network(Shape input_shape) : input_shape_(input_shape) {}

Network& Network::add(std::string name, LayerPtr layer) {
  if (!layer) throw std::invalid_argument("null layer");
  if (name.empty()) name = std::string(to_string(layer->kind())) + std::to_string(layers_.size() + 1);
  for (const NamedLayer& l : layers_) {
    if (l.name == name) throw std::invalid_argument("duplicate layer name '" + name + "'");
  }
  // Validates shape compatibility with the previous layer.
  layer->output_shape(shape_at(depth()));
  layers_.push_back({std::move(name), std::move(layer)});
  return *this;
}

std::size_t Network::resolve(const std::string& name_or_index) const {
  if (name_or_index.empty()) return 0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].name == name_or_index) return k + 1;
  }
  std::size_t index = 0;
  const char* first = name_or_index.data();
  const char* last = first + name_or_index.size();
  const auto [ptr, ec] = std::from_chars(first, last, index);
  if (ec == std::errc() && ptr == last && index <= layers_.size()) return index;
  throw std::invalid_argument("no layer '" + name_or_index + "' in network of depth " +
                              std::to_string(layers_.size()));
}

Shape Network::shape_at(std::size_t k) const {
  if (k > layers_.size()) throw std::out_of_range("layer index beyond network depth");
  Shape s = input_shape_;
  for (std::size_t i = 0; i < k; ++i) s = layers_[i].layer->output_shape(s);
  return s;
}

void Network::check_input(const Tensor& x) const {
  if (x.shape() != input_shape_) {
    throw ShapeError("network expects input " + input_shape_.str() + ", got " + x.shape().str());
  }
}

Tensor Network::forward(const Tensor& x, std::size_t stop, Activations* cache) const {
  check_input(x);
  if (stop > layers_.size()) throw std::out_of_range("stop layer beyond network depth");
  if (cache) {
    cache->values_.clear();
    cache->values_.reserve(stop + 1);
    cache->values_.push_back(x);
    for (std::size_t k = 0; k < stop; ++k) {
      cache->values_.push_back(layers_[k].layer->forward(cache->values_.back()));
    }
    cache->ready_ = true;
    return cache->values_.back();
  }
  Tensor current = x;
  for (std::size_t k = 0; k < stop; ++k) current = layers_[k].layer->forward(current);
  return current;
}

Tensor Network::backward(Activations& cache, const Tensor& grad_code) const {
  if (!cache.ready_) throw std::logic_error("backward called without a cached forward pass");
  const std::size_t stop = cache.depth();
  if (grad_code.shape() != cache.values_.back().shape()) {
    throw ShapeError("code gradient " + grad_code.shape().str() + " does not match code " +
                     cache.values_.back().shape().str());
  }
  Tensor grad = grad_code;
  for (std::size_t k = stop; k-- > 0;) {
    grad = layers_[k].layer->backward(cache.values_[k], cache.values_[k + 1], grad);
  }
  cache.values_.clear();
  cache.ready_ = false;
  return grad;
}

std::vector<std::uint8_t> Network::kink_signature(const Tensor& x, std::size_t stop) const {
  check_input(x);
  std::vector<std::uint8_t> sig;
  Tensor current = x;
  for (std::size_t k = 0; k < std::min(stop, layers_.size()); ++k) {
    layers_[k].layer->kink_signature(current, sig);
    current = layers_[k].layer->forward(current);
  }
  return sig;
}

Network Network::truncated(std::size_t stop) const {
  if (stop > layers_.size()) throw std::out_of_range("truncation beyond network depth");
  Network net(input_shape_);
  net.layers_.assign(layers_.begin(), layers_.begin() + static_cast<std::ptrdiff_t>(stop));
  return net;
}

}  // namespace finv

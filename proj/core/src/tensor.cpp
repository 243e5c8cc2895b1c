#include <algorithm>
#include <bit>
#include <cstring>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>

#include "eegrel/autodiff.hpp"

namespace eegrel {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw ShapeError("Tensor: " + std::to_string(values_.size()) + " values do not fill shape " + shape_str(shape_));
  }
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) + " changes size");
  }
  return Tensor(std::move(shape), values_);
}

void require_shape(const Tensor& t, const Shape& expected, std::string_view where) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(where) + ": expected shape " + shape_str(expected) + ", got " +
                     shape_str(t.shape()));
  }
}

Tensor Sequential::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward(h);
  return h;
}

Tensor Sequential::backward(const Tensor& dy) {
  Tensor g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

Tensor Sequential::infer(const Tensor& x) const {
  Tensor h = x;
  for (const auto& layer : layers_) h = layer->infer(h);
  return h;
}

Shape Sequential::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& layer : layers_) s = layer->output_shape(s);
  return s;
}

std::vector<Tensor*> Sequential::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    auto p = layer->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<Tensor*> Sequential::buffers() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    auto b = layer->buffers();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

namespace {

std::uint32_t le32(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  v = le32(v);
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw DataError("truncated tensor block");
  return le32(v);
}

}  // namespace

void write_tensor_block(std::ostream& out, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

Tensor read_tensor_block(std::istream& in) {
  const std::uint32_t rank = get_u32(in);
  if (rank > 8) throw DataError("tensor block rank " + std::to_string(rank) + " is implausible");
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(in);
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = std::bit_cast<float>(get_u32(in));
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace eegrel

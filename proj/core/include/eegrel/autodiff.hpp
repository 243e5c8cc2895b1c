#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eegrel/common.hpp"

namespace eegrel {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major array of doubles with an optional gradient buffer of the
// same length. The leading dimension is the batch for activations.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool has_grad() const { return !grad_.empty(); }
  void enable_grad() { grad_.assign(values_.size(), 0.0); }
  void zero_grad();
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }

  // Same values, new shape of equal size.
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<double> values_;
  std::vector<double> grad_;
};

void require_shape(const Tensor& t, const Shape& expected, std::string_view where);

// A differentiable layer. forward() runs in training mode and keeps whatever
// activations backward() needs; backward() must follow the matching
// forward(), accumulates parameter gradients, and returns dL/dx. infer() is
// the cache-free evaluation-mode pass and is safe to call concurrently.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual Tensor infer(const Tensor& x) const = 0;

  // Per-sample output shape for a per-sample input shape.
  virtual Shape output_shape(const Shape& in) const = 0;

  virtual std::vector<Tensor*> parameters() { return {}; }
  // Non-trainable state that must be checkpointed (batchnorm running stats).
  virtual std::vector<Tensor*> buffers() { return {}; }
};

using LayerPtr = std::unique_ptr<Layer>;

class Sequential : public Layer {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerPtr> layers) : layers_(std::move(layers)) {}

  void add(LayerPtr layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }
  const Layer& at(std::size_t i) const { return *layers_.at(i); }

  std::string kind() const override { return "sequential"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override;
  std::vector<Tensor*> parameters() override;
  std::vector<Tensor*> buffers() override;

 private:
  std::vector<LayerPtr> layers_;
};

enum class InitScheme {
  kHeUniform,     // U(-sqrt(6/fan_in), +), for layers feeding a ReLU
  kLecunUniform,  // U(-sqrt(3/fan_in), +), unit-variance linear maps
  kZero,
};

// y = x W + b over the last dimension; W is [in, out].
class Dense : public Layer {
 public:
  Dense(std::size_t in, std::size_t out, std::mt19937_64& rng, InitScheme init = InitScheme::kHeUniform);

  std::string kind() const override { return "dense"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override;
  std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

 private:
  std::size_t in_, out_;
  Tensor weight_, bias_;
  Tensor input_;
};

class Relu : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override { return in; }

 private:
  Tensor input_;
};

// [B, C, L] -> [B, F, L], stride 1, "same" zero padding (left pad (k-1)/2).
class Conv1d : public Layer {
 public:
  Conv1d(std::size_t in_channels, std::size_t filters, std::size_t kernel, std::mt19937_64& rng);

  std::string kind() const override { return "conv1d"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override;
  std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }

 private:
  void im2col(const double* x, std::size_t length, double* cols) const;
  Tensor run(const Tensor& x, std::vector<double>* cols_out) const;

  std::size_t in_ch_, filters_, kernel_;
  Tensor weight_, bias_;  // weight [F, C*k]
  std::vector<double> cols_;
  Shape input_shape_;
};

// [B, C, L] -> [B, C, floor(L/2)], width 2, stride 2. Ties pick the first.
class MaxPool1d : public Layer {
 public:
  std::string kind() const override { return "maxpool1d"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override;

 private:
  std::vector<std::size_t> argmax_;
  Shape input_shape_;
};

// Normalizes each feature of [B, F] or each channel of [B, C, L] with batch
// statistics in training and running statistics at inference.
class BatchNorm1d : public Layer {
 public:
  explicit BatchNorm1d(std::size_t features, double momentum = 0.9, double eps = 1e-5);

  std::string kind() const override { return "batchnorm1d"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override { return in; }
  std::vector<Tensor*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }

 private:
  std::size_t features_;
  double momentum_, eps_;
  Tensor gamma_, beta_, running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

// Normalizes over the last dimension.
class LayerNorm : public Layer {
 public:
  explicit LayerNorm(std::size_t features, double eps = 1e-5);

  std::string kind() const override { return "layernorm"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override { return in; }
  std::vector<Tensor*> parameters() override { return {&gamma_, &beta_}; }

 private:
  Tensor run(const Tensor& x, Tensor* xhat, std::vector<double>* inv_std) const;

  std::size_t features_;
  double eps_;
  Tensor gamma_, beta_;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

// Softmax over the last dimension.
class Softmax : public Layer {
 public:
  std::string kind() const override { return "softmax"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override { return in; }

 private:
  Tensor output_;
};

// Multi-head scaled dot-product self-attention over [B, T, D].
class MultiHeadAttention : public Layer {
 public:
  MultiHeadAttention(std::size_t d_model, std::size_t heads, std::mt19937_64& rng);

  std::string kind() const override { return "attention"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override;
  std::vector<Tensor*> parameters() override;

 private:
  struct Cache {
    Shape input_shape;
    Tensor q, k, v, attn;
  };
  void check_input(const Tensor& x) const;
  Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, Tensor* attn) const;

  std::size_t d_model_, heads_;
  Dense wq_, wk_, wv_, wo_;
  Cache cache_;
};

// Adds fixed sinusoidal position codes to [B, T, D].
class PositionalEncoding : public Layer {
 public:
  std::string kind() const override { return "posenc"; }
  Tensor forward(const Tensor& x) override { return infer(x); }
  Tensor backward(const Tensor& dy) override { return dy; }
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override { return in; }
};

// [B, T, D] -> [B, D]
class MeanPoolTime : public Layer {
 public:
  std::string kind() const override { return "meanpool"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override;

 private:
  Shape input_shape_;
};

// [B, ...] -> [B, prod(...)]
class Flatten : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override;

 private:
  Shape input_shape_;
};

// [B, C, L] -> [B, L, C]
class SwapLastTwo : public Layer {
 public:
  std::string kind() const override { return "transpose"; }
  Tensor forward(const Tensor& x) override { return infer(x); }
  Tensor backward(const Tensor& dy) override { return infer(dy); }
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override;
};

// Post-norm encoder block: h = LN(x + MHA(x)); y = LN(h + FF(h)).
class TransformerEncoderLayer : public Layer {
 public:
  TransformerEncoderLayer(std::size_t d_model, std::size_t heads, std::size_t ff_dim, std::mt19937_64& rng);

  std::string kind() const override { return "encoder"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  Tensor infer(const Tensor& x) const override;
  Shape output_shape(const Shape& in) const override { return in; }
  std::vector<Tensor*> parameters() override;

 private:
  MultiHeadAttention attention_;
  LayerNorm norm1_, norm2_;
  Dense ff1_;
  Relu ff_relu_;
  Dense ff2_;
};

struct BceResult {
  double loss;
  double dlogit;
};

// softplus(z) - y*z, evaluated without overflow for large |z|.
BceResult bce_loss(double logit, int label);

double sigmoid(double z);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;
};

// Bias-corrected Adam update using each parameter's accumulated gradient.
void adam_step(std::span<Tensor* const> params, AdamState& state);

// Shape-prefixed float32 little-endian block: u32 rank, u32 dims..., values.
void write_tensor_block(std::ostream& out, const Tensor& t);
Tensor read_tensor_block(std::istream& in);

}  // namespace eegrel

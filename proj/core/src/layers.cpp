#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "eegrel/autodiff.hpp"

namespace eegrel {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void init_uniform(Tensor& t, std::size_t fan_in, InitScheme scheme, std::mt19937_64& rng) {
  if (scheme == InitScheme::kZero) return;
  const double bound = std::sqrt((scheme == InitScheme::kHeUniform ? 6.0 : 3.0) / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.values()) v = u(rng);
}

Tensor make_param(Shape shape, double fill = 0.0) {
  Tensor t(std::move(shape), fill);
  t.enable_grad();
  return t;
}

void require_rank(const Tensor& x, std::size_t rank, std::string_view where) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(where) + ": expected rank " + std::to_string(rank) + " input, got " +
                     shape_str(x.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------- Dense

Dense::Dense(std::size_t in, std::size_t out, std::mt19937_64& rng, InitScheme init)
    : in_(in), out_(out), weight_(make_param({in, out})), bias_(make_param({out})) {
  init_uniform(weight_, in, init, rng);
}

Shape Dense::output_shape(const Shape& in) const {
  if (in.empty() || in.back() != in_) {
    throw ShapeError("dense: expected last dimension " + std::to_string(in_) + ", got " + shape_str(in));
  }
  Shape out = in;
  out.back() = out_;
  return out;
}

Tensor Dense::infer(const Tensor& x) const {
  if (x.rank() < 2 || x.shape().back() != in_) {
    throw ShapeError("dense: expected [..., " + std::to_string(in_) + "], got " + shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / in_;
  Shape out_shape = x.shape();
  out_shape.back() = out_;
  Tensor y(out_shape);
  ConstMatMap X(x.data(), rows, in_);
  ConstMatMap W(weight_.data(), in_, out_);
  Eigen::Map<const Eigen::RowVectorXd> b(bias_.data(), out_);
  MatMap Y(y.data(), rows, out_);
  Y.noalias() = X * W;
  Y.rowwise() += b;
  return y;
}

Tensor Dense::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Dense::backward(const Tensor& dy) {
  const std::size_t rows = input_.size() / in_;
  if (dy.size() != rows * out_) throw ShapeError("dense backward: gradient shape " + shape_str(dy.shape()));
  ConstMatMap X(input_.data(), rows, in_);
  ConstMatMap dY(dy.data(), rows, out_);
  ConstMatMap W(weight_.data(), in_, out_);
  MatMap dW(weight_.grad().data(), in_, out_);
  Eigen::Map<Eigen::RowVectorXd> db(bias_.grad().data(), out_);
  dW.noalias() += X.transpose() * dY;
  db += dY.colwise().sum();
  Tensor dx(input_.shape());
  MatMap dX(dx.data(), rows, in_);
  dX.noalias() = dY * W.transpose();
  return dx;
}

// ---------------------------------------------------------------- Relu

Tensor Relu::infer(const Tensor& x) const {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor Relu::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Relu::backward(const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(input_[i] > 0.0)) dx[i] = 0.0;
  }
  return dx;
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::size_t in_channels, std::size_t filters, std::size_t kernel, std::mt19937_64& rng)
    : in_ch_(in_channels),
      filters_(filters),
      kernel_(kernel),
      weight_(make_param({filters, in_channels * kernel})),
      bias_(make_param({filters})) {
  if (kernel < 1 || filters < 1 || in_channels < 1) throw ShapeError("conv1d: sizes must be positive");
  init_uniform(weight_, in_channels * kernel, InitScheme::kHeUniform, rng);
}

Shape Conv1d::output_shape(const Shape& in) const {
  if (in.size() != 2 || in[0] != in_ch_) {
    throw ShapeError("conv1d: expected [" + std::to_string(in_ch_) + ", L], got " + shape_str(in));
  }
  if (kernel_ > in[1]) {
    throw ShapeError("conv1d: kernel " + std::to_string(kernel_) + " exceeds sequence length " +
                     std::to_string(in[1]));
  }
  return {filters_, in[1]};
}

void Conv1d::im2col(const double* x, std::size_t length, double* cols) const {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((kernel_ - 1) / 2);
  const auto L = static_cast<std::ptrdiff_t>(length);
  for (std::size_t c = 0; c < in_ch_; ++c) {
    const double* xc = x + c * length;
    for (std::size_t j = 0; j < kernel_; ++j) {
      double* row = cols + (c * kernel_ + j) * length;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      for (std::ptrdiff_t t = 0; t < L; ++t) {
        const std::ptrdiff_t s = t + shift;
        row[t] = (s >= 0 && s < L) ? xc[s] : 0.0;
      }
    }
  }
}

Tensor Conv1d::run(const Tensor& x, std::vector<double>* cols_out) const {
  require_rank(x, 3, "conv1d");
  output_shape({x.dim(1), x.dim(2)});
  const std::size_t batch = x.dim(0), length = x.dim(2), ck = in_ch_ * kernel_;
  Tensor y({batch, filters_, length});
  std::vector<double> local;
  std::vector<double>& cols = cols_out ? *cols_out : local;
  cols.resize((cols_out ? batch : 1) * ck * length);
  ConstMatMap W(weight_.data(), filters_, ck);
  Eigen::Map<const Eigen::VectorXd> b(bias_.data(), filters_);
  for (std::size_t n = 0; n < batch; ++n) {
    double* cn = cols.data() + (cols_out ? n * ck * length : 0);
    im2col(x.data() + n * in_ch_ * length, length, cn);
    MatMap Y(y.data() + n * filters_ * length, filters_, length);
    Y.noalias() = W * ConstMatMap(cn, ck, length);
    Y.colwise() += b;
  }
  return y;
}

Tensor Conv1d::infer(const Tensor& x) const { return run(x, nullptr); }

Tensor Conv1d::forward(const Tensor& x) {
  input_shape_ = x.shape();
  return run(x, &cols_);
}

Tensor Conv1d::backward(const Tensor& dy) {
  const std::size_t batch = input_shape_[0], length = input_shape_[2], ck = in_ch_ * kernel_;
  require_shape(dy, {batch, filters_, length}, "conv1d backward");
  ConstMatMap W(weight_.data(), filters_, ck);
  MatMap dW(weight_.grad().data(), filters_, ck);
  Eigen::Map<Eigen::VectorXd> db(bias_.grad().data(), filters_);
  Tensor dx(input_shape_);
  RowMat dcols(ck, length);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((kernel_ - 1) / 2);
  const auto L = static_cast<std::ptrdiff_t>(length);
  for (std::size_t n = 0; n < batch; ++n) {
    ConstMatMap dY(dy.data() + n * filters_ * length, filters_, length);
    ConstMatMap cols(cols_.data() + n * ck * length, ck, length);
    dW.noalias() += dY * cols.transpose();
    db += dY.rowwise().sum();
    dcols.noalias() = W.transpose() * dY;
    double* dxn = dx.data() + n * in_ch_ * length;
    for (std::size_t c = 0; c < in_ch_; ++c) {
      double* dxc = dxn + c * length;
      for (std::size_t j = 0; j < kernel_; ++j) {
        const double* row = dcols.data() + (c * kernel_ + j) * length;
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(L, L - shift);
        for (std::ptrdiff_t t = t0; t < t1; ++t) dxc[t + shift] += row[t];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- MaxPool1d

Shape MaxPool1d::output_shape(const Shape& in) const {
  if (in.size() != 2 || in[1] < 2) throw ShapeError("maxpool1d: expected [C, L>=2], got " + shape_str(in));
  return {in[0], in[1] / 2};
}

Tensor MaxPool1d::infer(const Tensor& x) const {
  require_rank(x, 3, "maxpool1d");
  const std::size_t rows = x.dim(0) * x.dim(1), L = x.dim(2), out_len = L / 2;
  if (out_len == 0) throw ShapeError("maxpool1d: sequence too short " + shape_str(x.shape()));
  Tensor y({x.dim(0), x.dim(1), out_len});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * L;
    double* yr = y.data() + r * out_len;
    for (std::size_t t = 0; t < out_len; ++t) yr[t] = std::max(xr[2 * t], xr[2 * t + 1]);
  }
  return y;
}

Tensor MaxPool1d::forward(const Tensor& x) {
  Tensor y = infer(x);
  input_shape_ = x.shape();
  const std::size_t rows = x.dim(0) * x.dim(1), L = x.dim(2), out_len = L / 2;
  argmax_.resize(rows * out_len);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < out_len; ++t) {
      const std::size_t a = r * L + 2 * t;
      argmax_[r * out_len + t] = x[a + 1] > x[a] ? a + 1 : a;
    }
  }
  return y;
}

Tensor MaxPool1d::backward(const Tensor& dy) {
  if (dy.size() != argmax_.size()) throw ShapeError("maxpool1d backward: gradient shape " + shape_str(dy.shape()));
  Tensor dx(input_shape_);
  for (std::size_t i = 0; i < argmax_.size(); ++i) dx[argmax_[i]] += dy[i];
  return dx;
}

// ---------------------------------------------------------------- BatchNorm1d

namespace {

struct ChannelLayout {
  std::size_t outer, channels, inner;
};

ChannelLayout bn_layout(const Tensor& x, std::size_t features) {
  if (x.rank() == 2 && x.dim(1) == features) return {x.dim(0), features, 1};
  if (x.rank() == 3 && x.dim(1) == features) return {x.dim(0), features, x.dim(2)};
  throw ShapeError("batchnorm1d: expected [B, " + std::to_string(features) + "] or [B, " +
                   std::to_string(features) + ", L], got " + shape_str(x.shape()));
}

}  // namespace

BatchNorm1d::BatchNorm1d(std::size_t features, double momentum, double eps)
    : features_(features),
      momentum_(momentum),
      eps_(eps),
      gamma_(make_param({features}, 1.0)),
      beta_(make_param({features}, 0.0)),
      running_mean_({features}, 0.0),
      running_var_({features}, 1.0) {}

Tensor BatchNorm1d::infer(const Tensor& x) const {
  const auto [outer, channels, inner] = bn_layout(x, features_);
  Tensor y(x.shape());
  for (std::size_t n = 0; n < outer; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double inv = 1.0 / std::sqrt(running_var_[c] + eps_);
      const double g = gamma_[c] * inv, sh = beta_[c] - running_mean_[c] * g;
      const std::size_t base = (n * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) y[base + i] = x[base + i] * g + sh;
    }
  }
  return y;
}

Tensor BatchNorm1d::forward(const Tensor& x) {
  const auto [outer, channels, inner] = bn_layout(x, features_);
  const double count = static_cast<double>(outer * inner);
  Tensor y(x.shape());
  xhat_ = Tensor(x.shape());
  inv_std_.assign(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (std::size_t n = 0; n < outer; ++n) {
      const std::size_t base = (n * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) mean += x[base + i];
    }
    mean /= count;
    double var = 0.0;
    for (std::size_t n = 0; n < outer; ++n) {
      const std::size_t base = (n * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) var += (x[base + i] - mean) * (x[base + i] - mean);
    }
    var /= count;
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    for (std::size_t n = 0; n < outer; ++n) {
      const std::size_t base = (n * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double h = (x[base + i] - mean) * inv;
        xhat_[base + i] = h;
        y[base + i] = gamma_[c] * h + beta_[c];
      }
    }
    running_mean_[c] = momentum_ * running_mean_[c] + (1.0 - momentum_) * mean;
    running_var_[c] = momentum_ * running_var_[c] + (1.0 - momentum_) * var;
  }
  return y;
}

Tensor BatchNorm1d::backward(const Tensor& dy) {
  require_shape(dy, xhat_.shape(), "batchnorm1d backward");
  const auto [outer, channels, inner] = bn_layout(dy, features_);
  const double count = static_cast<double>(outer * inner);
  Tensor dx(dy.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < outer; ++n) {
      const std::size_t base = (n * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        sum_dy += dy[base + i];
        sum_dy_xhat += dy[base + i] * xhat_[base + i];
      }
    }
    gamma_.grad()[c] += sum_dy_xhat;
    beta_.grad()[c] += sum_dy;
    const double k = gamma_[c] * inv_std_[c] / count;
    for (std::size_t n = 0; n < outer; ++n) {
      const std::size_t base = (n * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        dx[base + i] = k * (count * dy[base + i] - sum_dy - xhat_[base + i] * sum_dy_xhat);
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(std::size_t features, double eps)
    : features_(features), eps_(eps), gamma_(make_param({features}, 1.0)), beta_(make_param({features}, 0.0)) {}

Tensor LayerNorm::run(const Tensor& x, Tensor* xhat, std::vector<double>* inv_std) const {
  if (x.rank() < 1 || x.shape().back() != features_) {
    throw ShapeError("layernorm: expected last dimension " + std::to_string(features_) + ", got " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / features_;
  const double d = static_cast<double>(features_);
  Tensor y(x.shape());
  if (xhat) *xhat = Tensor(x.shape());
  if (inv_std) inv_std->assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * features_;
    double mean = 0.0;
    for (std::size_t i = 0; i < features_; ++i) mean += xr[i];
    mean /= d;
    double var = 0.0;
    for (std::size_t i = 0; i < features_; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps_);
    if (inv_std) (*inv_std)[r] = inv;
    for (std::size_t i = 0; i < features_; ++i) {
      const double h = (xr[i] - mean) * inv;
      if (xhat) (*xhat)[r * features_ + i] = h;
      y[r * features_ + i] = gamma_[i] * h + beta_[i];
    }
  }
  return y;
}

Tensor LayerNorm::infer(const Tensor& x) const { return run(x, nullptr, nullptr); }

Tensor LayerNorm::forward(const Tensor& x) { return run(x, &xhat_, &inv_std_); }

Tensor LayerNorm::backward(const Tensor& dy) {
  require_shape(dy, xhat_.shape(), "layernorm backward");
  const std::size_t rows = dy.size() / features_;
  const double d = static_cast<double>(features_);
  Tensor dx(dy.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = dy.data() + r * features_;
    const double* hr = xhat_.data() + r * features_;
    double sum_g = 0.0, sum_gh = 0.0;
    for (std::size_t i = 0; i < features_; ++i) {
      const double g = dyr[i] * gamma_[i];
      sum_g += g;
      sum_gh += g * hr[i];
      gamma_.grad()[i] += dyr[i] * hr[i];
      beta_.grad()[i] += dyr[i];
    }
    const double k = inv_std_[r] / d;
    for (std::size_t i = 0; i < features_; ++i) {
      dx[r * features_ + i] = k * (d * dyr[i] * gamma_[i] - sum_g - hr[i] * sum_gh);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Softmax

Tensor Softmax::infer(const Tensor& x) const {
  if (x.rank() < 1) throw ShapeError("softmax: scalar input");
  const std::size_t d = x.shape().back(), rows = x.size() / d;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    double* yr = y.data() + r * d;
    const double m = *std::max_element(xr, xr + d);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (yr[i] = std::exp(xr[i] - m));
    for (std::size_t i = 0; i < d; ++i) yr[i] /= s;
  }
  return y;
}

Tensor Softmax::forward(const Tensor& x) {
  output_ = infer(x);
  return output_;
}

Tensor Softmax::backward(const Tensor& dy) {
  require_shape(dy, output_.shape(), "softmax backward");
  const std::size_t d = dy.shape().back(), rows = dy.size() / d;
  Tensor dx(dy.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* yr = output_.data() + r * d;
    const double* gr = dy.data() + r * d;
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += gr[i] * yr[i];
    for (std::size_t i = 0; i < d; ++i) dx[r * d + i] = yr[i] * (gr[i] - dot);
  }
  return dx;
}

// ---------------------------------------------------------------- PositionalEncoding

Tensor PositionalEncoding::infer(const Tensor& x) const {
  require_rank(x, 3, "posenc");
  const std::size_t batch = x.dim(0), steps = x.dim(1), d = x.dim(2);
  Tensor y = x;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
      const double angle = static_cast<double>(t) * rate;
      const double pe = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
      for (std::size_t n = 0; n < batch; ++n) y[(n * steps + t) * d + i] += pe;
    }
  }
  return y;
}

// ---------------------------------------------------------------- MeanPoolTime

Shape MeanPoolTime::output_shape(const Shape& in) const {
  if (in.size() != 2) throw ShapeError("meanpool: expected [T, D], got " + shape_str(in));
  return {in[1]};
}

Tensor MeanPoolTime::infer(const Tensor& x) const {
  require_rank(x, 3, "meanpool");
  const std::size_t batch = x.dim(0), steps = x.dim(1), d = x.dim(2);
  Tensor y({batch, d});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t i = 0; i < d; ++i) y[n * d + i] += x[(n * steps + t) * d + i];
    }
    for (std::size_t i = 0; i < d; ++i) y[n * d + i] /= static_cast<double>(steps);
  }
  return y;
}

Tensor MeanPoolTime::forward(const Tensor& x) {
  input_shape_ = x.shape();
  return infer(x);
}

Tensor MeanPoolTime::backward(const Tensor& dy) {
  const std::size_t batch = input_shape_[0], steps = input_shape_[1], d = input_shape_[2];
  require_shape(dy, {batch, d}, "meanpool backward");
  Tensor dx(input_shape_);
  const double inv = 1.0 / static_cast<double>(steps);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t i = 0; i < d; ++i) dx[(n * steps + t) * d + i] = dy[n * d + i] * inv;
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Flatten

Shape Flatten::output_shape(const Shape& in) const { return {shape_size(in)}; }

Tensor Flatten::infer(const Tensor& x) const {
  if (x.rank() < 1) throw ShapeError("flatten: scalar input");
  return x.reshaped({x.dim(0), x.size() / std::max<std::size_t>(1, x.dim(0))});
}

Tensor Flatten::forward(const Tensor& x) {
  input_shape_ = x.shape();
  return infer(x);
}

Tensor Flatten::backward(const Tensor& dy) { return dy.reshaped(input_shape_); }

// ---------------------------------------------------------------- SwapLastTwo

Shape SwapLastTwo::output_shape(const Shape& in) const {
  if (in.size() != 2) throw ShapeError("transpose: expected [C, L], got " + shape_str(in));
  return {in[1], in[0]};
}

Tensor SwapLastTwo::infer(const Tensor& x) const {
  require_rank(x, 3, "transpose");
  const std::size_t batch = x.dim(0), a = x.dim(1), b = x.dim(2);
  Tensor y({batch, b, a});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < a; ++i) {
      for (std::size_t j = 0; j < b; ++j) y[(n * b + j) * a + i] = x[(n * a + i) * b + j];
    }
  }
  return y;
}

}  // namespace eegrel

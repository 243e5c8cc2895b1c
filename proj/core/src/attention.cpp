#include <Eigen/Core>
#include <cmath>

#include "eegrel/autodiff.hpp"

namespace eegrel {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void softmax_rows(RowMat& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - m).exp();
    s.row(r) /= s.row(r).sum();
  }
}

}  // namespace

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t heads, std::mt19937_64& rng)
    : d_model_(d_model),
      heads_(heads),
      wq_(d_model, d_model, rng, InitScheme::kLecunUniform),
      wk_(d_model, d_model, rng, InitScheme::kLecunUniform),
      wv_(d_model, d_model, rng, InitScheme::kLecunUniform),
      wo_(d_model, d_model, rng, InitScheme::kLecunUniform) {
  if (heads == 0 || d_model % heads != 0) {
    throw ShapeError("attention: d_model " + std::to_string(d_model) + " is not divisible by heads " +
                     std::to_string(heads));
  }
}

Shape MultiHeadAttention::output_shape(const Shape& in) const {
  if (in.size() != 2 || in[1] != d_model_) {
    throw ShapeError("attention: expected [T, " + std::to_string(d_model_) + "], got " + shape_str(in));
  }
  return in;
}

std::vector<Tensor*> MultiHeadAttention::parameters() {
  std::vector<Tensor*> out;
  for (Dense* d : {&wq_, &wk_, &wv_, &wo_}) {
    auto p = d->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

Tensor MultiHeadAttention::attend(const Tensor& q, const Tensor& k, const Tensor& v, Tensor* attn) const {
  const std::size_t batch = q.dim(0), steps = q.dim(1), dh = d_model_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor context(q.shape());
  if (attn) *attn = Tensor({batch, heads_, steps, steps});
  RowMat s(steps, steps);
  for (std::size_t n = 0; n < batch; ++n) {
    const std::size_t off = n * steps * d_model_;
    ConstMatMap Q(q.data() + off, steps, d_model_);
    ConstMatMap K(k.data() + off, steps, d_model_);
    ConstMatMap V(v.data() + off, steps, d_model_);
    MatMap C(context.data() + off, steps, d_model_);
    for (std::size_t h = 0; h < heads_; ++h) {
      const auto col = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      s.noalias() = scale * Q.middleCols(col, w) * K.middleCols(col, w).transpose();
      softmax_rows(s);
      C.middleCols(col, w).noalias() = s * V.middleCols(col, w);
      if (attn) MatMap(attn->data() + (n * heads_ + h) * steps * steps, steps, steps) = s;
    }
  }
  return context;
}

void MultiHeadAttention::check_input(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != d_model_) {
    throw ShapeError("attention: expected [B, T, " + std::to_string(d_model_) + "], got " + shape_str(x.shape()));
  }
}

Tensor MultiHeadAttention::infer(const Tensor& x) const {
  check_input(x);
  return wo_.infer(attend(wq_.infer(x), wk_.infer(x), wv_.infer(x), nullptr));
}

Tensor MultiHeadAttention::forward(const Tensor& x) {
  check_input(x);
  cache_.input_shape = x.shape();
  cache_.q = wq_.forward(x);
  cache_.k = wk_.forward(x);
  cache_.v = wv_.forward(x);
  return wo_.forward(attend(cache_.q, cache_.k, cache_.v, &cache_.attn));
}

Tensor MultiHeadAttention::backward(const Tensor& dy) {
  const Shape& shape = cache_.input_shape;
  require_shape(dy, shape, "attention backward");
  const std::size_t batch = shape[0], steps = shape[1], dh = d_model_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor dcontext = wo_.backward(dy);
  Tensor dq(shape), dk(shape), dv(shape);
  RowMat da(steps, steps), ds(steps, steps);
  for (std::size_t n = 0; n < batch; ++n) {
    const std::size_t off = n * steps * d_model_;
    ConstMatMap Q(cache_.q.data() + off, steps, d_model_);
    ConstMatMap K(cache_.k.data() + off, steps, d_model_);
    ConstMatMap V(cache_.v.data() + off, steps, d_model_);
    ConstMatMap dC(dcontext.data() + off, steps, d_model_);
    MatMap dQ(dq.data() + off, steps, d_model_);
    MatMap dK(dk.data() + off, steps, d_model_);
    MatMap dV(dv.data() + off, steps, d_model_);
    for (std::size_t h = 0; h < heads_; ++h) {
      const auto col = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      ConstMatMap A(cache_.attn.data() + (n * heads_ + h) * steps * steps, steps, steps);
      da.noalias() = dC.middleCols(col, w) * V.middleCols(col, w).transpose();
      dV.middleCols(col, w).noalias() = A.transpose() * dC.middleCols(col, w);
      const Eigen::VectorXd dot = (da.array() * A.array()).rowwise().sum();
      ds = A.array() * (da.array().colwise() - dot.array());
      dQ.middleCols(col, w).noalias() = scale * ds * K.middleCols(col, w);
      dK.middleCols(col, w).noalias() = scale * ds.transpose() * Q.middleCols(col, w);
    }
  }
  Tensor dx = wq_.backward(dq);
  Tensor dxk = wk_.backward(dk);
  Tensor dxv = wv_.backward(dv);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxk[i] + dxv[i];
  return dx;
}

TransformerEncoderLayer::TransformerEncoderLayer(std::size_t d_model, std::size_t heads, std::size_t ff_dim,
                                                 std::mt19937_64& rng)
    : attention_(d_model, heads, rng),
      norm1_(d_model),
      norm2_(d_model),
      ff1_(d_model, ff_dim, rng, InitScheme::kHeUniform),
      ff2_(ff_dim, d_model, rng, InitScheme::kLecunUniform) {}

std::vector<Tensor*> TransformerEncoderLayer::parameters() {
  std::vector<Tensor*> out;
  for (Layer* l : std::initializer_list<Layer*>{&attention_, &norm1_, &ff1_, &ff2_, &norm2_}) {
    auto p = l->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

namespace {

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

}  // namespace

Tensor TransformerEncoderLayer::infer(const Tensor& x) const {
  Tensor h = norm1_.infer(add(x, attention_.infer(x)));
  Tensor f = ff2_.infer(ff_relu_.infer(ff1_.infer(h)));
  return norm2_.infer(add(h, f));
}

Tensor TransformerEncoderLayer::forward(const Tensor& x) {
  Tensor h = norm1_.forward(add(x, attention_.forward(x)));
  Tensor f = ff2_.forward(ff_relu_.forward(ff1_.forward(h)));
  return norm2_.forward(add(h, f));
}

Tensor TransformerEncoderLayer::backward(const Tensor& dy) {
  Tensor ds2 = norm2_.backward(dy);
  Tensor dh = add(ds2, ff1_.backward(ff_relu_.backward(ff2_.backward(ds2))));
  Tensor ds1 = norm1_.backward(dh);
  return add(ds1, attention_.backward(ds1));
}

}  // namespace eegrel

#include "eegrel/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "gradient_suite.hpp"
#include "test_support.hpp"

namespace eegrel {
namespace {

using testing::random_tensor;

class GradientCheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientCheck, BackpropMatchesFiniteDifferences) {
  const auto cases = testing::gradient_cases();
  const auto& c = cases.at(GetParam());
  EXPECT_LT(c.run(), 1e-4) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllPrimitivesAndModels, GradientCheck,
                         ::testing::Range<std::size_t>(0, testing::gradient_cases().size()),
                         [](const auto& info) { return testing::gradient_cases()[info.param].name; });

// The checker itself must flag a backward pass that is slightly wrong.
TEST(GradientChecker, DetectsPerturbedBackward) {
  std::mt19937_64 rng(9);
  Dense dense(5, 3, rng);
  const Tensor x = random_tensor({4, 5}, rng);
  const double err = testing::max_gradient_error(
      [&](const Tensor& in) { return dense.forward(in); },
      [&](const Tensor& dy) {
        Tensor dx = dense.backward(dy);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.001;
        return dx;
      },
      x, {}, rng);
  EXPECT_GT(err, 5e-4);
}

TEST(Tensor, ShapeAndReshape) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
  t.enable_grad();
  EXPECT_EQ(t.grad().size(), t.size());
}

TEST(Relu, BackwardMasksNegativeInputs) {
  Relu relu;
  relu.forward(Tensor({1, 2}, {-1.0, 2.0}));
  const Tensor dx = relu.backward(Tensor({1, 2}, {1.0, 1.0}));
  EXPECT_EQ(dx[0], 0.0);
  EXPECT_EQ(dx[1], 1.0);
}

TEST(Dense, IdentityWeightsPassInputThrough) {
  std::mt19937_64 rng(1);
  Dense dense(3, 3, rng);
  for (std::size_t i = 0; i < 9; ++i) dense.weight()[i] = (i % 4 == 0) ? 1.0 : 0.0;
  for (double& b : dense.bias().values()) b = 0.0;
  const Tensor x({2, 3}, {1.0, -2.0, 3.0, 0.5, 0.25, -8.0});
  const Tensor y = dense.infer(x);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Dense, ParameterCountOfThreeToTwoIsEight) {
  std::mt19937_64 rng(1);
  Dense dense(3, 2, rng);
  std::size_t n = 0;
  for (Tensor* p : dense.parameters()) n += p->size();
  EXPECT_EQ(n, 8u);
}

TEST(Dense, RejectsWrongWidth) {
  std::mt19937_64 rng(1);
  Dense dense(3, 2, rng);
  EXPECT_THROW(dense.infer(Tensor({1, 4})), ShapeError);
}

TEST(Conv1d, SamePaddingKeepsLength) {
  std::mt19937_64 rng(1);
  for (std::size_t k : {1u, 2u, 5u, 8u, 50u}) {
    Conv1d conv(17, 4, k, rng);
    EXPECT_EQ(conv.output_shape({17, 200}), (Shape{4, 200})) << k;
  }
}

TEST(Conv1d, MatchesDirectCorrelation) {
  std::mt19937_64 rng(2);
  Conv1d conv(2, 1, 4, rng);
  const Tensor x = random_tensor({1, 2, 9}, rng);
  const Tensor y = conv.infer(x);
  const auto params = conv.parameters();
  const Tensor& w = *params[0];
  const double b = (*params[1])[0];
  // Left pad (k-1)/2 = 1.
  for (std::size_t t = 0; t < 9; ++t) {
    double acc = b;
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t j = 0; j < 4; ++j) {
        const long src = static_cast<long>(t + j) - 1;
        if (src >= 0 && src < 9) acc += w[c * 4 + j] * x[c * 9 + static_cast<std::size_t>(src)];
      }
    }
    EXPECT_NEAR(y[t], acc, 1e-12);
  }
}

TEST(MaxPool1d, OddLengthDropsTail) {
  MaxPool1d pool;
  const Tensor y = pool.infer(Tensor({1, 1, 5}, {1.0, 3.0, 2.0, 2.0, 9.0}));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2}));
  EXPECT_EQ(y[0], 3.0);
  EXPECT_EQ(y[1], 2.0);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(3);
  Softmax softmax;
  const Tensor y = softmax.infer(random_tensor({4, 6}, rng, 30.0));
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += y[r * 6 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Attention, RejectsIndivisibleHeads) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(MultiHeadAttention(22, 4, rng), ShapeError);
}

TEST(BatchNorm, InferenceUsesRunningStatistics) {
  BatchNorm1d bn(2);
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({8, 2}, rng);
  // Fresh running stats are mean 0, var 1: inference is nearly the identity.
  const Tensor y = bn.infer(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i] / std::sqrt(1.0 + 1e-5), 1e-12);
  bn.forward(x);
  EXPECT_NE(bn.buffers()[0]->values()[0], 0.0);
}

TEST(BatchInvariance, BatchedInferenceEqualsPerSample) {
  std::mt19937_64 rng(5);
  Sequential net;
  net.add(std::make_unique<Conv1d>(3, 4, 5, rng));
  net.add(std::make_unique<Relu>());
  net.add(std::make_unique<BatchNorm1d>(4));
  net.add(std::make_unique<MaxPool1d>());
  net.add(std::make_unique<SwapLastTwo>());
  net.add(std::make_unique<TransformerEncoderLayer>(4, 2, 8, rng));
  net.add(std::make_unique<MeanPoolTime>());
  net.add(std::make_unique<Dense>(4, 1, rng));
  net.forward(random_tensor({6, 3, 16}, rng));  // move running stats off their defaults
  const Tensor x = random_tensor({5, 3, 16}, rng);
  const Tensor batched = net.infer(x);
  for (std::size_t b = 0; b < 5; ++b) {
    Tensor one({1, 3, 16});
    std::copy_n(x.data() + b * 48, 48, one.data());
    EXPECT_DOUBLE_EQ(net.infer(one)[0], batched[b]);
  }
}

TEST(Bce, ValuesAtReferencePoints) {
  EXPECT_NEAR(bce_loss(0.0, 1).loss, std::numbers::ln2, 1e-15);
  EXPECT_NEAR(bce_loss(0.0, 1).dlogit, -0.5, 1e-15);
  const auto big = bce_loss(30.0, 1);
  EXPECT_TRUE(std::isfinite(big.loss));
  EXPECT_NEAR(big.loss, 0.0, 1e-12);
  const auto huge = bce_loss(-800.0, 1);
  EXPECT_NEAR(huge.loss, 800.0, 1e-9);
  EXPECT_NEAR(huge.dlogit, -1.0, 1e-15);
  EXPECT_NEAR(bce_loss(800.0, 0).loss, 800.0, 1e-9);
}

TEST(Bce, GradientMatchesFiniteDifference) {
  for (double z : {-7.0, -0.3, 0.0, 1.2, 9.0}) {
    for (int y : {0, 1}) {
      const double fd = (bce_loss(z + 1e-6, y).loss - bce_loss(z - 1e-6, y).loss) / 2e-6;
      EXPECT_NEAR(bce_loss(z, y).dlogit, fd, 1e-8);
    }
  }
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  Tensor p({3}, std::vector<double>{1.0, 1.0, 1.0});
  p.enable_grad();
  p.grad()[0] = 4.0;
  p.grad()[1] = -0.02;
  p.grad()[2] = 0.0;
  AdamState state;
  state.lr = 0.01;
  Tensor* params[] = {&p};
  adam_step(params, state);
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-8);
  EXPECT_NEAR(p[1], 1.0 + 0.01, 1e-6);
  EXPECT_EQ(p[2], 1.0);
  EXPECT_EQ(state.step, 1u);
}

// Reference implementation of the bias-corrected update rule.
double reference_adam_quadratic(double theta, double lr, int steps) {
  double m = 0.0, v = 0.0;
  for (int t = 1; t <= steps; ++t) {
    const double g = 2.0 * theta;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    theta -= lr * mhat / (std::sqrt(vhat) + 1e-8);
  }
  return theta;
}

TEST(Adam, QuadraticConvergesLikeReference) {
  Tensor theta({1}, std::vector<double>{1.0});
  theta.enable_grad();
  AdamState state;
  state.lr = 0.1;
  Tensor* params[] = {&theta};
  for (int t = 1; t <= 200; ++t) {
    theta.grad()[0] = 2.0 * theta[0];
    adam_step(params, state);
    EXPECT_NEAR(theta[0], reference_adam_quadratic(1.0, 0.1, t), 1e-12);
  }
  EXPECT_LT(std::abs(theta[0]), 0.1);
}

TEST(TensorBlock, RoundTripsAtFloat32) {
  std::mt19937_64 rng(6);
  const Tensor t = random_tensor({3, 1, 4}, rng);
  std::stringstream s;
  write_tensor_block(s, t);
  const Tensor back = read_tensor_block(s);
  EXPECT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(t[i])));
}

TEST(Init, SameSeedSameParameters) {
  std::mt19937_64 a(77), b(77);
  Dense da(10, 4, a), db(10, 4, b);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(da.weight()[i], db.weight()[i]);
}

}  // namespace
}  // namespace eegrel

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "needletrack/layers.hpp"

using namespace needletrack;
using needletrack::testing::max_relative_error;
using needletrack::testing::numeric_gradient;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = dist(gen);
  return t;
}

// Scalar probe L = sum(out * probe), so dL/dout = probe.
double probe_dot(const Tensor<double>& out, const Tensor<double>& probe) {
  return std::inner_product(out.data().begin(), out.data().end(), probe.data().begin(), 0.0);
}

std::vector<double> as_vector(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

// Straight window iteration with explicit zero padding.
Tensor<double> direct_conv(const Tensor<double>& in, const Tensor<double>& w, const Tensor<double>& b,
                           std::size_t stride, std::size_t pad) {
  const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const std::size_t O = w.dim(0), kH = w.dim(2), kW = w.dim(3);
  const std::size_t Ho = (H + 2 * pad - kH) / stride + 1, Wo = (W + 2 * pad - kW) / stride + 1;
  Tensor<double> out({O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double acc = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t u = 0; u < kH; ++u)
            for (std::size_t v = 0; v < kW; ++v) {
              const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
              const long s = static_cast<long>(j * stride + v) - static_cast<long>(pad);
              if (r < 0 || s < 0 || r >= static_cast<long>(H) || s >= static_cast<long>(W)) continue;
              acc += in.at(c, r, s) * w[((o * C + c) * kH + u) * kW + v];
            }
        out.at(o, i, j) = acc;
      }
  return out;
}

}  // namespace

// ---- conv2d ---------------------------------------------------------------

TEST(Conv2d, DefaultFirstLayerShape) {
  EXPECT_EQ(conv2d_output_shape({3, 400, 400}, {16, 3, 3, 3}, 2, 1), (Shape{16, 200, 200}));
  Tensor<float> input({3, 400, 400}, 0.5f);
  Tensor<float> weight({16, 3, 3, 3}, 0.1f);
  Tensor<float> bias({16});
  EXPECT_EQ(conv2d(input, weight, bias, 2, 1).output.shape(), (Shape{16, 200, 200}));
}

TEST(Conv2d, IdentityKernel) {
  Tensor<double> input({1, 2, 2}, 1.0);
  Tensor<double> weight({1, 1, 1, 1}, 1.0);
  Tensor<double> bias({1});
  auto r = conv2d(input, weight, bias, 1, 0);
  EXPECT_EQ(r.output, Tensor<double>({1, 2, 2}, 1.0));
}

TEST(Conv2d, WindowSums) {
  Tensor<double> input({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor<double> weight({1, 1, 2, 2}, 1.0);
  Tensor<double> bias({1});
  auto r = conv2d(input, weight, bias, 1, 0);
  EXPECT_EQ(r.output, Tensor<double>({1, 2, 2}, {12, 16, 24, 28}));
}

TEST(Conv2d, MatchesDirectWindowIteration) {
  struct Case { Shape in, w; std::size_t stride, pad; };
  const Case cases[] = {{{3, 9, 7}, {4, 3, 3, 3}, 2, 1},
                        {{2, 8, 8}, {5, 2, 3, 3}, 1, 1},
                        {{1, 6, 5}, {2, 1, 2, 3}, 1, 0},
                        {{3, 11, 10}, {2, 3, 3, 3}, 3, 2}};
  std::uint64_t seed = 1;
  for (const auto& c : cases) {
    auto in = random_tensor(c.in, seed++);
    auto w = random_tensor(c.w, seed++);
    auto b = random_tensor({c.w[0]}, seed++);
    const auto fast = conv2d(in, w, b, c.stride, c.pad).output;
    const auto slow = direct_conv(in, w, b, c.stride, c.pad);
    ASSERT_EQ(fast.shape(), slow.shape());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      EXPECT_NEAR(fast[i], slow[i], 1e-12 * std::max(1.0, std::abs(slow[i])));
    }
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  Tensor<double> input({2, 4, 4});
  Tensor<double> weight({1, 3, 3, 3});
  Tensor<double> bias({1});
  try {
    conv2d(input, weight, bias, 1, 1);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,4,4)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(1,3,3,3)"), std::string::npos) << msg;
  }
}

TEST(Conv2d, RejectsKernelLargerThanPaddedInput) {
  Tensor<double> input({1, 2, 2});
  Tensor<double> weight({1, 1, 5, 5});
  Tensor<double> bias({1});
  EXPECT_THROW(conv2d(input, weight, bias, 1, 1), ShapeError);
  EXPECT_THROW(conv2d(input, weight, bias, 0, 0), std::invalid_argument);
}

TEST(Conv2d, DoesNotMutateInputs) {
  auto in = random_tensor({2, 5, 5}, 3);
  auto w = random_tensor({3, 2, 3, 3}, 4);
  auto b = random_tensor({3}, 5);
  const auto in0 = in, w0 = w, b0 = b;
  conv2d(in, w, b, 1, 1);
  EXPECT_EQ(in, in0);
  EXPECT_EQ(w, w0);
  EXPECT_EQ(b, b0);
}

TEST(Conv2dBackward, ZeroUpstreamGivesZeroGradients) {
  auto in = random_tensor({2, 6, 6}, 7);
  auto w = random_tensor({3, 2, 3, 3}, 8);
  auto b = random_tensor({3}, 9);
  auto r = conv2d(in, w, b, 2, 1);
  auto g = conv2d_backward(r.ctx, Tensor<double>(r.output.shape()));
  for (double v : g.input.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.weight.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.bias.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dBackward, ScalarKernelWeightGradient) {
  auto in = random_tensor({1, 4, 5}, 10);
  Tensor<double> w({1, 1, 1, 1}, 0.7);
  Tensor<double> b({1});
  auto r = conv2d(in, w, b, 1, 0);
  auto probe = random_tensor(r.output.shape(), 11);
  auto g = conv2d_backward(r.ctx, probe);
  EXPECT_NEAR(g.weight[0], probe_dot(in, probe), 1e-12);
}

TEST(Conv2dBackward, FiniteDifferences) {
  struct Case { Shape in, w; std::size_t stride, pad; };
  const Case cases[] = {{{2, 6, 6}, {3, 2, 3, 3}, 1, 1}, {{3, 7, 6}, {2, 3, 3, 3}, 2, 1}};
  std::uint64_t seed = 20;
  for (const auto& c : cases) {
    auto in = random_tensor(c.in, seed++);
    auto w = random_tensor(c.w, seed++);
    auto b = random_tensor({c.w[0]}, seed++);
    auto fwd = conv2d(in, w, b, c.stride, c.pad);
    auto probe = random_tensor(fwd.output.shape(), seed++);
    auto g = conv2d_backward(fwd.ctx, probe);
    auto loss = [&] { return probe_dot(conv2d(in, w, b, c.stride, c.pad).output, probe); };
    EXPECT_LT(max_relative_error(as_vector(g.input), numeric_gradient(in.data(), loss)), 1e-4);
    EXPECT_LT(max_relative_error(as_vector(g.weight), numeric_gradient(w.data(), loss)), 1e-4);
    EXPECT_LT(max_relative_error(as_vector(g.bias), numeric_gradient(b.data(), loss)), 1e-4);
  }
}

TEST(Conv2dBackward, RejectsWrongGradShapeAndReuse) {
  auto in = random_tensor({1, 4, 4}, 30);
  auto w = random_tensor({2, 1, 3, 3}, 31);
  Tensor<double> b({2});
  auto r = conv2d(in, w, b, 1, 1);
  EXPECT_THROW(conv2d_backward(r.ctx, Tensor<double>({2, 3, 3})), ShapeError);
  conv2d_backward(r.ctx, Tensor<double>(r.output.shape()));
  EXPECT_THROW(conv2d_backward(r.ctx, Tensor<double>(r.output.shape())), ContextReuseError);
}

// ---- relu -----------------------------------------------------------------

TEST(Relu, Examples) {
  auto r = relu(Tensor<double>({3}, {-1, 0, 2}));
  EXPECT_EQ(r.output, Tensor<double>({3}, {0, 0, 2}));

  const Tensor<double> positive({4}, {0, 1, 2.5, 1e9});
  EXPECT_EQ(relu(positive).output, positive);

  auto r2 = relu(Tensor<double>({2}, {-1, 2}));
  EXPECT_EQ(relu_backward(r2.ctx, Tensor<double>({2}, {5, 7})), Tensor<double>({2}, {0, 7}));
}

TEST(Relu, DerivativeAtZeroIsZero) {
  auto r = relu(Tensor<double>({1}, {0.0}));
  EXPECT_EQ(relu_backward(r.ctx, Tensor<double>({1}, {1.0}))[0], 0.0);
}

TEST(Relu, FiniteDifferences) {
  auto in = random_tensor({2, 5, 5}, 40);
  for (auto& v : in.data()) {
    if (std::abs(v) < 0.05) v += 0.1;  // stay off the kink
  }
  auto probe = random_tensor(in.shape(), 41);
  auto r = relu(in);
  auto g = relu_backward(r.ctx, probe);
  auto loss = [&] { return probe_dot(relu(in).output, probe); };
  EXPECT_LT(max_relative_error(as_vector(g), numeric_gradient(in.data(), loss)), 1e-4);
}

// ---- max pooling ----------------------------------------------------------

TEST(MaxPool, DefaultShape) {
  Tensor<float> in({16, 200, 200}, 1.0f);
  EXPECT_EQ(maxpool2d(in).output.shape(), (Shape{16, 100, 100}));
}

TEST(MaxPool, ConstantInputRoutesToWindowOrigin) {
  Tensor<double> in({1, 4, 4}, 3.0);
  auto r = maxpool2d(in);
  EXPECT_EQ(r.output, Tensor<double>({1, 2, 2}, 3.0));
  auto g = maxpool2d_backward(r.ctx, Tensor<double>({1, 2, 2}, {1, 2, 3, 4}));
  const Tensor<double> expected({1, 4, 4}, {1, 0, 2, 0,
                                            0, 0, 0, 0,
                                            3, 0, 4, 0,
                                            0, 0, 0, 0});
  EXPECT_EQ(g, expected);
}

TEST(MaxPool, GradientConservation) {
  std::mt19937_64 gen(50);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> values(3 * 8 * 6);
    std::iota(values.begin(), values.end(), 0.0);
    std::shuffle(values.begin(), values.end(), gen);  // distinct maxima
    Tensor<double> in({3, 8, 6}, values);
    auto r = maxpool2d(in);
    auto probe = random_tensor(r.output.shape(), 51 + trial);
    auto g = maxpool2d_backward(r.ctx, probe);
    const double sum_in = std::accumulate(g.data().begin(), g.data().end(), 0.0);
    const double sum_out = std::accumulate(probe.data().begin(), probe.data().end(), 0.0);
    EXPECT_NEAR(sum_in, sum_out, 1e-12);
  }
}

TEST(MaxPool, FiniteDifferences) {
  std::mt19937_64 gen(60);
  std::vector<double> values(2 * 6 * 4);
  std::iota(values.begin(), values.end(), 0.0);
  std::shuffle(values.begin(), values.end(), gen);
  for (auto& v : values) v *= 0.1;  // gaps of 0.1 >> h
  Tensor<double> in({2, 6, 4}, values);
  auto r = maxpool2d(in);
  auto probe = random_tensor(r.output.shape(), 61);
  auto g = maxpool2d_backward(r.ctx, probe);
  auto loss = [&] { return probe_dot(maxpool2d(in).output, probe); };
  EXPECT_LT(max_relative_error(as_vector(g), numeric_gradient(in.data(), loss)), 1e-4);
}

TEST(MaxPool, RejectsOddSides) {
  EXPECT_THROW(maxpool2d(Tensor<double>({1, 3, 4})), ShapeError);
  EXPECT_THROW(maxpool2d(Tensor<double>({1, 4, 5})), ShapeError);
}

// ---- linear ---------------------------------------------------------------

TEST(Linear, IdentityWeight) {
  Tensor<double> w({3, 3});
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  const Tensor<double> x({3}, {1.5, -2, 4});
  EXPECT_EQ(linear(x, w, Tensor<double>({3})).output, x);
}

TEST(Linear, HeadParameterCount) {
  EXPECT_EQ(element_count({3, 512}) + element_count({3}), 1539u);
}

TEST(Linear, FiniteDifferences) {
  auto x = random_tensor({4}, 70);
  auto w = random_tensor({2, 4}, 71);
  auto b = random_tensor({2}, 72);
  auto probe = random_tensor({2}, 73);
  auto r = linear(x, w, b);
  auto g = linear_backward(r.ctx, probe);
  auto loss = [&] { return probe_dot(linear(x, w, b).output, probe); };
  EXPECT_LT(max_relative_error(as_vector(g.input), numeric_gradient(x.data(), loss)), 1e-6);
  EXPECT_LT(max_relative_error(as_vector(g.weight), numeric_gradient(w.data(), loss)), 1e-6);
  EXPECT_LT(max_relative_error(as_vector(g.bias), numeric_gradient(b.data(), loss)), 1e-6);
}

TEST(Linear, RejectsDimensionMismatch) {
  EXPECT_THROW(linear(Tensor<double>({5}), Tensor<double>({2, 4}), Tensor<double>({2})), ShapeError);
  EXPECT_THROW(linear(Tensor<double>({4}), Tensor<double>({2, 4}), Tensor<double>({3})), ShapeError);
}

// ---- dropout --------------------------------------------------------------

TEST(Dropout, EvalModeAndZeroRateAreIdentity) {
  auto x = random_tensor({50}, 80);
  Rng rng(1);
  EXPECT_EQ(dropout(x, 0.5, Mode::eval, rng).output, x);
  EXPECT_EQ(dropout(x, 0.0, Mode::train, rng).output, x);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  Tensor<double> ones({100000}, 1.0);
  Rng rng(81);
  auto r = dropout(ones, 0.5, Mode::train, rng);
  const double mean = std::accumulate(r.output.data().begin(), r.output.data().end(), 0.0) / 1e5;
  EXPECT_GE(mean, 0.98);
  EXPECT_LE(mean, 1.02);
  for (double v : r.output.data()) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

TEST(Dropout, BackwardReusesMask) {
  auto x = random_tensor({64}, 82);
  Rng rng(83);
  auto r = dropout(x, 0.3, Mode::train, rng);
  auto g = dropout_backward(r.ctx, Tensor<double>({64}, 1.0));
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_DOUBLE_EQ(r.output[i], x[i] * g[i]);
  }
}

TEST(Dropout, RejectsRateOutsideUnitInterval) {
  Rng rng(0);
  EXPECT_THROW(dropout(Tensor<double>({3}), 1.0, Mode::train, rng), std::invalid_argument);
  EXPECT_THROW(dropout(Tensor<double>({3}), -0.1, Mode::train, rng), std::invalid_argument);
}

// ---- mse ------------------------------------------------------------------

TEST(Mse, Examples) {
  const Tensor<double> a({3}, {1, 2, 3});
  auto same = mse_loss(a, a);
  EXPECT_EQ(same.loss, 0.0);
  for (double v : same.grad.data()) EXPECT_EQ(v, 0.0);

  auto r = mse_loss(a, Tensor<double>({3}));
  EXPECT_DOUBLE_EQ(r.loss, 14.0 / 3.0);
}

TEST(Mse, FiniteDifferences) {
  auto pred = random_tensor({3}, 90);
  auto target = random_tensor({3}, 91);
  auto r = mse_loss(pred, target);
  auto loss = [&] { return mse_loss(pred, target).loss; };
  EXPECT_LT(max_relative_error(as_vector(r.grad), numeric_gradient(pred.data(), loss)), 1e-6);
}

TEST(Mse, RejectsShapeMismatch) {
  EXPECT_THROW(mse_loss(Tensor<double>({3}), Tensor<double>({4})), ShapeError);
}

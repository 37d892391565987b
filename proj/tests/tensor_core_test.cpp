#include <gtest/gtest.h>

#include <random>

#include "bidrn/errors.hpp"
#include "bidrn/ops.hpp"
#include "oracles.hpp"

using namespace bidrn;

TEST(Shape, RejectsZeroExtent) {
  EXPECT_THROW(validate(Shape{1, 0, 2, 2}), DimensionError);
  EXPECT_NO_THROW(validate(Shape{1, 1, 1, 1}));
  EXPECT_THROW(Tensor(Shape{1, 2, 3, 4}, std::vector<float>(5)), DimensionError);
}

TEST(Conv2dReference, ConstantCase) {
  Tensor x(Shape{1, 1, 2, 2}, 1.0f), w(Shape{1, 1, 2, 2}, 1.0f);
  Tensor y = conv2d_reference(x, w, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(y[0], 4.0f);
}

TEST(Conv2dReference, IdentityKernel) {
  std::mt19937_64 rng(3);
  Tensor x = oracle::random_tensor<float>(Shape{2, 1, 5, 4}, rng);
  Tensor w(Shape{1, 1, 1, 1}, 1.0f);
  EXPECT_EQ(conv2d_reference(x, w, 1, 0).vec(), x.vec());
}

TEST(Conv2dReference, MatchesDirectLoopStride2Pad1) {
  std::mt19937_64 rng(5);
  Tensor x = oracle::random_tensor<float>(Shape{1, 3, 8, 8}, rng);
  Tensor w = oracle::random_tensor<float>(Shape{4, 3, 3, 3}, rng);
  Tensor y = conv2d_reference(x, w, 2, 1);
  auto ref = oracle::direct_conv(x, w, 2, 1);
  ASSERT_EQ(y.shape(), ref.shape);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 4, 4}));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref.v[i], 1e-5);
}

TEST(Conv2dReference, RandomShapesAgainstOracle) {
  std::mt19937_64 rng(11);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = pick(1, 3), stride = pick(1, 2), pad = pick(0, k / 2 + 1);
    const Shape xs{pick(1, 2), pick(1, 4), pick(k, 7), pick(k, 7)};
    Tensor x = oracle::random_tensor<float>(xs, rng);
    Tensor w = oracle::random_tensor<float>(Shape{pick(1, 4), xs.channels, k, k}, rng);
    Tensor y = conv2d_reference(x, w, stride, pad);
    auto ref = oracle::direct_conv(x, w, stride, pad);
    ASSERT_EQ(y.shape(), ref.shape) << "trial " << trial;
    for (std::size_t i = 0; i < y.size(); ++i)
      ASSERT_LE(oracle::rel_err(y[i], ref.v[i], 1e-3), 1e-5) << "trial " << trial;
  }
}

TEST(Conv2dReference, ChannelMismatchNamesBothShapes) {
  Tensor x(Shape{1, 3, 4, 4}), w(Shape{2, 2, 3, 3});
  try {
    conv2d_reference(x, w, 1, 0);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1x3x4x4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2x2x3x3"), std::string::npos) << msg;
  }
}

TEST(AvgPool, HandValue) {
  Tensor x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_FLOAT_EQ(avg_pool2d(x, 2, 2)[0], 2.5f);
}

TEST(AvgPool, ConstantPreserved) {
  Tensor x(Shape{2, 3, 6, 4}, 0.75f);
  Tensor y = avg_pool2d(x, 2, 2);
  EXPECT_EQ(y.shape(), (Shape{2, 3, 3, 2}));
  for (float v : y.vec()) EXPECT_EQ(v, 0.75f);
}

TEST(AvgPool, RandomAgainstEnumeration) {
  std::mt19937_64 rng(2);
  Tensor x = oracle::random_tensor<float>(Shape{1, 2, 4, 4}, rng);
  Tensor y = avg_pool2d(x, 2, 2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t oy = 0; oy < 2; ++oy)
      for (std::size_t ox = 0; ox < 2; ++ox) {
        double s = 0;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) s += x(0, c, 2 * oy + dy, 2 * ox + dx);
        EXPECT_NEAR(y(0, c, oy, ox), s / 4, 1e-6);
      }
}

TEST(AvgPool, WindowLargerThanInput) {
  EXPECT_THROW(avg_pool2d(Tensor(Shape{1, 1, 2, 2}), 3, 1), DimensionError);
}

TEST(Channels, ConcatLayout) {
  std::mt19937_64 rng(4);
  Tensor a = oracle::random_tensor<float>(Shape{2, 4, 3, 3}, rng);
  Tensor b = oracle::random_tensor<float>(Shape{2, 4, 3, 3}, rng);
  Tensor c = concat_channels(a, b);
  ASSERT_EQ(c.shape().channels, 8u);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t ch = 0; ch < 4; ++ch)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) {
          EXPECT_EQ(c(n, ch, y, x), a(n, ch, y, x));
          EXPECT_EQ(c(n, ch + 4, y, x), b(n, ch, y, x));
        }
}

TEST(Channels, RoundTrips) {
  std::mt19937_64 rng(6);
  Tensor a = oracle::random_tensor<float>(Shape{2, 3, 2, 5}, rng);
  Tensor b = oracle::random_tensor<float>(Shape{2, 1, 2, 5}, rng);
  auto [p, q] = split_channels(concat_channels(a, b), 3);
  EXPECT_EQ(p.vec(), a.vec());
  EXPECT_EQ(q.vec(), b.vec());

  Tensor x = oracle::random_tensor<float>(Shape{1, 4, 3, 3}, rng);
  auto [h1, h2] = split_channels(x, 2);
  EXPECT_EQ(h1.shape().channels, 2u);
  EXPECT_EQ(concat_channels(h1, h2).vec(), x.vec());
  auto [s1, s2] = split_channels(Tensor(Shape{1, 2, 1, 1}), 1);
  EXPECT_EQ(s1.shape().channels, 1u);
  EXPECT_EQ(s2.shape().channels, 1u);
}

TEST(Channels, Errors) {
  EXPECT_THROW(split_channels(Tensor(Shape{1, 4, 2, 2}), 0), DimensionError);
  EXPECT_THROW(split_channels(Tensor(Shape{1, 4, 2, 2}), 4), DimensionError);
  EXPECT_THROW(concat_channels(Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{1, 2, 3, 2})),
               DimensionError);
  EXPECT_THROW(concat_channels(Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{2, 2, 2, 2})),
               DimensionError);
}

TEST(BatchNorm, TrainingNormalizes) {
  std::mt19937_64 rng(8);
  Tensor x = oracle::random_tensor<float>(Shape{4, 3, 4, 4}, rng, -3, 5);
  BatchNormParams<float> p("bn", 3);
  Tensor y = batch_norm_forward(x, p, true);
  std::vector<double> mean, var;
  oracle::two_pass_stats(y, mean, var);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_LT(std::abs(mean[c]), 1e-5);
    EXPECT_LT(std::abs(var[c] - 1.0), 1e-3);
  }
}

TEST(BatchNorm, InferenceIdentityStatistics) {
  std::mt19937_64 rng(9);
  Tensor x = oracle::random_tensor<float>(Shape{2, 2, 3, 3}, rng);
  BatchNormParams<float> p("bn", 2);
  Tensor y = batch_norm_forward(x, p, false);
  const double k = 1.0 / std::sqrt(1.0 + 1e-5);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i] * k, 1e-7);
}

TEST(BatchNorm, MatchesTwoPassReference) {
  std::mt19937_64 rng(10);
  Tensor x = oracle::random_tensor<float>(Shape{3, 2, 5, 5}, rng, -2, 2);
  BatchNormParams<float> p("bn", 2);
  p.scale.value = Tensor(Shape{1, 2, 1, 1}, {1.5f, -0.5f});
  p.shift.value = Tensor(Shape{1, 2, 1, 1}, {0.25f, 1.0f});
  Tensor y = batch_norm_forward(x, p, true);
  std::vector<double> mean, var;
  oracle::two_pass_stats(x, mean, var);
  const double sc[] = {1.5, -0.5}, sh[] = {0.25, 1.0};
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 25; ++i) {
        const double ref =
            (x(n, c, i / 5, i % 5) - mean[c]) / std::sqrt(var[c] + 1e-5) * sc[c] + sh[c];
        EXPECT_NEAR(y(n, c, i / 5, i % 5), ref, 1e-5);
      }
  // running stats moved by momentum 0.1 toward the batch statistics
  const double m = 25.0 * 3;
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_NEAR(p.running_mean.value[c], 0.1 * mean[c], 1e-6);
    EXPECT_NEAR(p.running_var.value[c], 0.9 + 0.1 * var[c] * m / (m - 1), 1e-5);
    EXPECT_GE(p.running_var.value[c], 0.0f);
  }
}

TEST(BatchNorm, ChannelMismatch) {
  BatchNormParams<float> p("bn", 3);
  EXPECT_THROW(batch_norm_forward(Tensor(Shape{1, 2, 2, 2}), p, true), DimensionError);
}

TEST(Hardtanh, Branches) {
  Tensor x(Shape{1, 1, 1, 4}, {1.5f, -0.3f, -2.0f, 1.0f});
  Tensor y = hardtanh_forward(x);
  EXPECT_EQ(y[0], 1.0f);
  EXPECT_EQ(y[1], -0.3f);
  EXPECT_EQ(y[2], -1.0f);
  EXPECT_EQ(y[3], 1.0f);
}

TEST(Hardtanh, Idempotent) {
  std::mt19937_64 rng(12);
  Tensor x = oracle::random_tensor<float>(Shape{2, 3, 4, 4}, rng, -3, 3);
  Tensor once = hardtanh_forward(x);
  EXPECT_EQ(hardtanh_forward(once).vec(), once.vec());
}

TEST(L1Loss, Cases) {
  Tensor a(Shape{1, 1, 1, 2}, {1, 2}), z(Shape{1, 1, 1, 2});
  EXPECT_EQ(l1_loss(a, a), 0.0f);
  EXPECT_FLOAT_EQ(l1_loss(a, z), 1.5f);
  std::mt19937_64 rng(13);
  Tensor p = oracle::random_tensor<float>(Shape{2, 3, 3, 3}, rng);
  Tensor q = oracle::random_tensor<float>(Shape{2, 3, 3, 3}, rng);
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(double(p[i]) - q[i]);
  EXPECT_NEAR(l1_loss(p, q), s / p.size(), 1e-6);
  EXPECT_THROW(l1_loss(p, a), DimensionError);
}

TEST(Tensor, ForwardOutputsFinite) {
  std::mt19937_64 rng(14);
  Tensor x = oracle::random_tensor<float>(Shape{2, 2, 4, 4}, rng, -100, 100);
  Tensor w = oracle::random_tensor<float>(Shape{2, 2, 3, 3}, rng);
  BatchNormParams<float> p("bn", 2);
  EXPECT_TRUE(conv2d_reference(x, w, 1, 1).all_finite());
  EXPECT_TRUE(batch_norm_forward(x, p, true).all_finite());
  EXPECT_TRUE(avg_pool2d(x, 2, 2).all_finite());
}

#include <gtest/gtest.h>

#include <random>

#include "bidrn/binarize.hpp"
#include "bidrn/errors.hpp"
#include "bidrn/ops.hpp"
#include "bidrn/parallel.hpp"
#include "oracles.hpp"

using namespace bidrn;

TEST(Sign, ZeroIsPositive) {
  Tensor x(Shape{1, 1, 1, 4}, {0.0f, -1.5f, 0.2f, 3.0f});
  Tensor s = sign_forward(x);
  EXPECT_EQ(s.vec(), (std::vector<float>{1, -1, 1, 1}));
  EXPECT_EQ(sign_forward(s).vec(), s.vec());
  EXPECT_EQ(sign_forward(Tensor(Shape{1, 1, 1, 1}, -0.0f))[0], 1.0f);
}

TEST(SteGrad, Examples) {
  Tensor x(Shape{1, 1, 1, 3}, {0.5f, 2.0f, 0.0f});
  Tensor g = ste_grad(x);
  const double h = 1e-4;
  EXPECT_NEAR(g[0], (oracle::surrogate(0.5 + h) - oracle::surrogate(0.5 - h)) / (2 * h), 1e-6);
  EXPECT_FLOAT_EQ(g[0], 1.0f);
  EXPECT_EQ(g[1], 0.0f);
  EXPECT_NEAR(g[2], (oracle::surrogate(h) - oracle::surrogate(-h)) / (2 * h), 1e-4);
  EXPECT_FLOAT_EQ(g[2], 2.0f);
}

TEST(SteGrad, FiniteDifferencesAndSaturation) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = 1e-4;
  int checked = 0;
  while (checked < 1000) {
    const double x = u(rng);
    if (std::abs(x) < 1e-3 || std::abs(std::abs(x) - 1) < 1e-3) continue;
    const double fd = (oracle::surrogate(x + h) - oracle::surrogate(x - h)) / (2 * h);
    ASSERT_NEAR(ste_derivative(x), fd, 1e-4) << x;
    ++checked;
  }
  for (double x : {1.0, -1.0, 1.0001, -7.0, 50.0}) EXPECT_EQ(ste_derivative(x), 0.0);
}

TEST(BinarizeWeights, HandValues) {
  BinaryConv2dParams<float> p("w", Tensor(Shape{3, 1, 2, 2}, {0.5f, -1.5f, 1.0f, -1.0f,  //
                                                               0, 0, 0, 0,              //
                                                               2, 2, 2, 2}),
                              1, 0);
  Tensor b = binarize_weights(p);
  EXPECT_FLOAT_EQ(p.alpha[0], 1.0f);
  EXPECT_FLOAT_EQ(p.alpha[1], 0.0f);
  EXPECT_FLOAT_EQ(p.alpha[2], 2.0f);
  EXPECT_EQ(b.vec(), (std::vector<float>{1, -1, 1, -1, 0, 0, 0, 0, 2, 2, 2, 2}));
}

TEST(BinarizeWeights, AlphaRefreshAndFinalize) {
  BinaryConv2dParams<float> p("w", Tensor(Shape{1, 2, 1, 1}, {1.0f, -3.0f}), 1, 0);
  p.latent_weights.value[1] = 1.0f;
  refresh_alpha(p);
  EXPECT_FLOAT_EQ(p.alpha[0], 1.0f);
  finalize(p);
  p.latent_weights.value[0] = 5.0f;
  refresh_alpha(p);
  EXPECT_FLOAT_EQ(p.alpha[0], 1.0f);
}

TEST(BinarizeWeights, L1Preserved) {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 50; ++t) {
    Tensor w = oracle::random_tensor<float>(Shape{5, 3, 3, 3}, rng, -2, 2);
    BinaryConv2dParams<float> p("w", w, 1, 1);
    Tensor b = binarize_weights(p);
    for (std::size_t oc = 0; oc < 5; ++oc) {
      double lw = 0, lb = 0;
      for (std::size_t j = 0; j < 27; ++j) {
        lw += std::abs(w[oc * 27 + j]);
        lb += std::abs(b[oc * 27 + j]);
      }
      EXPECT_LE(std::abs(lw - lb), 1e-5 * lw);
      EXPECT_GE(p.alpha[oc], 0.0f);
    }
  }
}

TEST(Packing, Definition) {
  std::vector<float> row{1, -1, 1};
  PackedBits b = pack_signs<float>(row, 1, 3);
  EXPECT_EQ(b.words.size(), 1u);
  EXPECT_EQ(b.words[0], 0b101u);
  EXPECT_EQ(b.valid_len, 3u);
  std::vector<float> ones(64, 1.0f);
  EXPECT_EQ(pack_signs<float>(ones, 1, 64).words[0], ~std::uint64_t{0});
}

TEST(Packing, TailBitsZeroAndRoundTrip) {
  std::mt19937_64 rng(23);
  for (std::size_t len = 1; len <= 200; len += 7) {
    const std::size_t rows = 1 + len % 3;
    Tensor v = oracle::random_tensor<float>(Shape{1, 1, rows, len}, rng);
    PackedBits b = pack_signs<float>(v.data(), rows, len);
    ASSERT_EQ(b.words_per_row, (len + 63) / 64);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::uint64_t last = b.row(r).back();
      EXPECT_EQ(last & ~b.tail_mask(), 0u) << len;
    }
    auto back = unpack_signs<float>(b);
    for (std::size_t i = 0; i < v.size(); ++i) ASSERT_EQ(back[i], v[i] >= 0 ? 1.0f : -1.0f);
  }
}

TEST(Packing, LengthMismatch) {
  std::vector<float> v(10);
  EXPECT_THROW(pack_signs<float>(v, 3, 4), DimensionError);
}

TEST(XnorDot, Examples) {
  std::vector<float> a{1, -1, 1}, w{1, 1, -1};
  PackedBits pa = pack_signs<float>(a, 1, 3), pw = pack_signs<float>(w, 1, 3);
  EXPECT_EQ(xnor_popcount_dot(pa, 0, pw, 0), -1);
  std::mt19937_64 rng(24);
  for (std::size_t len : {1u, 63u, 64u, 65u, 130u, 200u}) {
    Tensor v = oracle::random_tensor<float>(Shape{1, 1, 1, len}, rng);
    Tensor neg(v.shape());
    for (std::size_t i = 0; i < len; ++i) neg[i] = v[i] >= 0 ? -1.0f : 1.0f;
    PackedBits p = pack_signs<float>(v.data(), 1, len);
    PackedBits q = pack_signs<float>(neg.data(), 1, len);
    EXPECT_EQ(xnor_popcount_dot(p, 0, p, 0), std::int64_t(len));
    EXPECT_EQ(xnor_popcount_dot(p, 0, q, 0), -std::int64_t(len));
  }
  PackedBits p3 = pack_signs<float>(a, 1, 3);
  std::vector<float> four{1, 1, 1, 1};
  PackedBits p4 = pack_signs<float>(four, 1, 4);
  EXPECT_THROW(xnor_popcount_dot(p3, 0, p4, 0), DimensionError);
}

TEST(XnorDot, TailFaultIsDetectable) {
  std::vector<float> a{1, -1, 1};
  PackedBits pa = pack_signs<float>(a, 1, 3);
  bidrn::testing::set_tail_mask_fault(true);
  const auto broken = xnor_popcount_dot(pa, 0, pa, 0);
  bidrn::testing::set_tail_mask_fault(false);
  EXPECT_NE(broken, 3);
  EXPECT_EQ(xnor_popcount_dot(pa, 0, pa, 0), 3);
}

TEST(BinaryConv2d, HandEvaluation) {
  Tensor x(Shape{1, 1, 2, 2}, {0.3f, 1.0f, 2.0f, 0.1f});
  BinaryConv2dParams<float> p("w", Tensor(Shape{1, 1, 1, 1}, 0.5f), 1, 0);
  Tensor y = binary_conv2d(x, p);
  for (float v : y.vec()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(BinaryConv2d, PositiveWeightsSumSigns) {
  std::mt19937_64 rng(25);
  Tensor x = oracle::random_tensor<float>(Shape{1, 1, 6, 6}, rng);
  Tensor w = oracle::random_tensor<float>(Shape{1, 1, 3, 3}, rng, 0.1, 1.0);
  BinaryConv2dParams<float> p("w", w, 1, 0);
  Tensor y = binary_conv2d(x, p);
  for (std::size_t oy = 0; oy < 4; ++oy)
    for (std::size_t ox = 0; ox < 4; ++ox) {
      int s = 0;
      for (std::size_t ky = 0; ky < 3; ++ky)
        for (std::size_t kx = 0; kx < 3; ++kx) s += x(0, 0, oy + ky, ox + kx) >= 0 ? 1 : -1;
      EXPECT_FLOAT_EQ(y(0, 0, oy, ox), p.alpha[0] * s);
    }
}

TEST(BinaryConv2d, PackedPathMatchesOracles) {
  std::mt19937_64 rng(26);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = pick(0, 1) ? 3 : 1, stride = pick(1, 2);
    const std::size_t pad = pick(0, 1) ? k / 2 : 0;
    const std::size_t cin = pick(1, 8), cout = pick(1, 8);
    Tensor x = oracle::random_tensor<float>(Shape{1, cin, pick(k, 8), pick(k, 8)}, rng);
    Tensor w = oracle::random_tensor<float>(Shape{cout, cin, k, k}, rng);
    BinaryConv2dParams<float> p("w", w, stride, pad);
    const IntAccumulators acc = binary_conv2d_accumulate(x, p);
    const auto ref = oracle::pm1_conv(x, w, stride, pad);
    ASSERT_EQ(acc.values.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_EQ(acc.values[i], ref[i]) << trial;

    // float oracle on explicitly padded signs
    Tensor sx = sign_forward(pad2d(x, pad, 0.0f));
    Tensor weff = sign_forward(w);
    for (std::size_t i = 0; i < weff.size(); ++i) weff[i] *= p.alpha[i / (cin * k * k)];
    const auto fref = oracle::direct_conv(sx, weff, stride, 0);
    Tensor y = binary_conv2d(x, p);
    ASSERT_EQ(y.shape(), fref.shape);
    const std::size_t plane = y.shape().plane();
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double a = p.alpha[(i / plane) % cout];
      ASSERT_LE(std::abs(y[i] - fref.v[i]), 1e-5 * std::max(std::abs(fref.v[i]), a));
    }
  }
}

TEST(BinaryConv2d, PaddingReadsAsPlusOne) {
  // All-negative input: interior cells are -1, padding contributes +1.
  Tensor x(Shape{1, 1, 3, 3}, -1.0f);
  BinaryConv2dParams<float> p("w", Tensor(Shape{1, 1, 3, 3}, 1.0f), 1, 1);
  Tensor y = binary_conv2d(x, p);
  EXPECT_FLOAT_EQ(y(0, 0, 1, 1), -9.0f);
  EXPECT_FLOAT_EQ(y(0, 0, 0, 0), 5.0f - 4.0f);
}

TEST(BinaryConv2d, ThreadCountDoesNotChangeResult) {
  std::mt19937_64 rng(27);
  Tensor x = oracle::random_tensor<float>(Shape{2, 8, 9, 9}, rng);
  BinaryConv2dParams<float> p("w", oracle::random_tensor<float>(Shape{6, 8, 3, 3}, rng), 1, 1);
  set_max_threads(1);
  Tensor a = binary_conv2d(x, p);
  set_max_threads(4);
  Tensor b = binary_conv2d(x, p);
  set_max_threads(0);
  EXPECT_EQ(a.vec(), b.vec());
}

TEST(BinaryConv2d, ShapeMismatch) {
  BinaryConv2dParams<float> p("w", Tensor(Shape{2, 3, 3, 3}, 1.0f), 1, 0);
  EXPECT_THROW(binary_conv2d(Tensor(Shape{1, 2, 5, 5}), p), DimensionError);
}

TEST(BinaryDeconv2d, HandEvaluation) {
  Tensor x(Shape{1, 1, 1, 1}, 1.0f);
  BinaryConv2dParams<float> p("w", Tensor(Shape{1, 1, 2, 2}, 0.5f), 2, 0);
  Tensor y = binary_deconv2d(x, p, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (float v : y.vec()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(BinaryDeconv2d, ZeroAlpha) {
  std::mt19937_64 rng(28);
  Tensor x = oracle::random_tensor<float>(Shape{1, 2, 3, 3}, rng);
  BinaryConv2dParams<float> p("w", Tensor(Shape{3, 2, 4, 4}), 2, 1);
  Tensor y = binary_deconv2d(x, p, 2);
  for (float v : y.vec()) EXPECT_EQ(v, 0.0f);
}

TEST(BinaryDeconv2d, MatchesFloatTransposedOracle) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t k = 2 + trial % 3, s = 1 + trial % 2, pad = trial % 2;
    const std::size_t cin = 1 + trial % 3, cout = 1 + (trial / 3) % 3;
    Tensor x = oracle::random_tensor<float>(Shape{std::size_t(1 + trial % 2), cin, 3, 4}, rng);
    Tensor w = oracle::random_tensor<float>(Shape{cout, cin, k, k}, rng);
    BinaryConv2dParams<float> p("w", w, s, pad);
    Tensor y = binary_deconv2d(x, p, s);
    Tensor weff = sign_forward(w);
    for (std::size_t i = 0; i < weff.size(); ++i) weff[i] *= p.alpha[i / (cin * k * k)];
    const auto ref = oracle::direct_deconv(sign_forward(x), weff, s, pad);
    ASSERT_EQ(y.shape(), ref.shape) << trial;
    EXPECT_EQ(y.shape().height, (3 - 1) * s - 2 * pad + k);
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], ref.v[i], 1e-5) << trial;
  }
}

TEST(PackedBits, Footprint) {
  for (std::size_t len : {2048u, 2304u, 4608u}) {
    PackedBits b(16, len);
    EXPECT_EQ(b.bytes(), 16 * ((len + 63) / 64) * 8);
    EXPECT_GE(double(16 * len * 4) / double(b.bytes()), 30.0);
  }
}

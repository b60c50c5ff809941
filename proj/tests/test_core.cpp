#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "ttx/tensor.hpp"

using ttx::Act;
using ttx::MaskMatrix;
using ttx::Tensor;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, std::mt19937& rng, float a = 1.0f) {
  std::uniform_real_distribution<float> dist(-a, a);
  Tensor t(std::move(shape));
  for (float& v : t.data) v = dist(rng);
  return t;
}

// Independent triple-loop reference for matmul.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int64_t l = 0; l < k; ++l) acc += a.at(i, l) * b.at(l, j);
      c.at(i, j) = acc;
    }
  return c;
}

}  // namespace

TEST(Matmul, Identity) {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor b({2, 2}, {1, 2, 3, 4});
  const Tensor c = ttx::matmul(eye, b);
  EXPECT_EQ(c.data, b.data);
}

TEST(Matmul, Scalar) {
  const Tensor a({1, 1}, {2});
  const Tensor b({1, 1}, {3});
  EXPECT_FLOAT_EQ(ttx::matmul(a, b).data[0], 6.0f);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  std::mt19937 rng(7);
  const Tensor a = random_tensor({5, 4}, rng);
  const Tensor b = random_tensor({4, 3}, rng);
  const Tensor c = ttx::matmul(a, b);
  const Tensor ref = matmul_oracle(a, b);
  for (int64_t i = 0; i < c.numel(); ++i)
    EXPECT_NEAR(c.data[i], ref.data[i], 1e-6f);
}

TEST(Matmul, DimensionMismatchThrows) {
  const Tensor a({2, 3});
  const Tensor b({2, 2});
  EXPECT_THROW(ttx::matmul(a, b), ttx::ShapeError);
}

TEST(Matmul, RightIdentityExact) {
  std::mt19937 rng(8);
  const Tensor a = random_tensor({4, 6}, rng);
  Tensor eye({6, 6});
  for (int i = 0; i < 6; ++i) eye.at(i, i) = 1.0f;
  EXPECT_EQ(ttx::matmul(a, eye).data, a.data);
}

TEST(MaskedSoftmax, SymmetricRow) {
  const Tensor s({1, 2}, {0, 0});
  MaskMatrix m(1, 2);
  m.set(0, 0, true);
  m.set(0, 1, true);
  const Tensor out = ttx::masked_softmax_rows(s, m);
  EXPECT_FLOAT_EQ(out.at(0, 0), 0.5f);
  EXPECT_FLOAT_EQ(out.at(0, 1), 0.5f);
}

TEST(MaskedSoftmax, SingleAllowedEntry) {
  const Tensor s({1, 2}, {5, 100});
  MaskMatrix m(1, 2);
  m.set(0, 0, true);
  const Tensor out = ttx::masked_softmax_rows(s, m);
  EXPECT_FLOAT_EQ(out.at(0, 0), 1.0f);
  EXPECT_EQ(out.at(0, 1), 0.0f);
}

TEST(MaskedSoftmax, DirectFormula) {
  const Tensor s({1, 3}, {1, 2, 3});
  MaskMatrix m(1, 3);
  m.set(0, 0, true);
  m.set(0, 1, true);
  const Tensor out = ttx::masked_softmax_rows(s, m);
  const double z = std::exp(1.0) + std::exp(2.0);
  EXPECT_NEAR(out.at(0, 0), std::exp(1.0) / z, 1e-6);
  EXPECT_NEAR(out.at(0, 1), std::exp(2.0) / z, 1e-6);
  EXPECT_EQ(out.at(0, 2), 0.0f);
}

TEST(MaskedSoftmax, FullyMaskedRowThrows) {
  const Tensor s({1, 2}, {0, 0});
  MaskMatrix m(1, 2);
  EXPECT_THROW(ttx::masked_softmax_rows(s, m), ttx::MaskError);
}

TEST(MaskedSoftmax, RowsSumToOneAndMaskedBitsAreZero) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int t = 1 + static_cast<int>(rng() % 8);
    const Tensor s = random_tensor({t, t}, rng, 5.0f);
    MaskMatrix m(t, t);
    for (int i = 0; i < t; ++i) {
      m.set(i, static_cast<int>(rng() % t), true);
      for (int j = 0; j < t; ++j)
        if (rng() % 2) m.set(i, j, true);
    }
    const Tensor out = ttx::masked_softmax_rows(s, m);
    for (int i = 0; i < t; ++i) {
      float sum = 0.0f;
      for (int j = 0; j < t; ++j) {
        if (m.at(i, j)) {
          EXPECT_GE(out.at(i, j), 0.0f);
          sum += out.at(i, j);
        } else {
          // Disallowed entries must be bit-zero.
          EXPECT_EQ(std::memcmp(&out.data[i * t + j], "\0\0\0\0", 4), 0);
        }
      }
      EXPECT_NEAR(sum, 1.0f, 1e-6f);
    }
  }
}

TEST(LayerNorm, ConstantVector) {
  const Tensor x({3}, {1, 1, 1});
  const Tensor gain({3}, {1, 1, 1});
  const Tensor bias({3}, {0, 0, 0});
  const Tensor out = ttx::layer_norm(x, gain, bias);
  for (float v : out.data) EXPECT_NEAR(v, 0.0f, 1e-6f);
}

TEST(LayerNorm, SymmetricPair) {
  const Tensor x({2}, {-1, 1});
  const Tensor gain({2}, {1, 1});
  const Tensor bias({2}, {0, 0});
  const Tensor out = ttx::layer_norm(x, gain, bias);
  EXPECT_NEAR(out.data[0], -1.0f, 1e-4f);
  EXPECT_NEAR(out.data[1], 1.0f, 1e-4f);
}

TEST(LayerNorm, OutputStatistics) {
  std::mt19937 rng(3);
  const Tensor x = random_tensor({8}, rng, 3.0f);
  const Tensor gain({8}, std::vector<float>(8, 1.0f));
  const Tensor bias({8}, std::vector<float>(8, 0.0f));
  const Tensor out = ttx::layer_norm(x, gain, bias);
  double mean = 0.0, var = 0.0;
  for (float v : out.data) mean += v;
  mean /= 8.0;
  for (float v : out.data) var += (v - mean) * (v - mean);
  var /= 8.0;
  EXPECT_NEAR(mean, 0.0, 1e-5);
  EXPECT_NEAR(var, 1.0, 1e-3);
}

TEST(LayerNorm, ShiftInvariance) {
  std::mt19937 rng(4);
  const Tensor gain({6}, std::vector<float>(6, 1.5f));
  const Tensor bias({6}, std::vector<float>(6, 0.25f));
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor({6}, rng, 2.0f);
    Tensor shifted = x;
    for (float& v : shifted.data) v += 3.75f;
    const Tensor a = ttx::layer_norm(x, gain, bias);
    const Tensor b = ttx::layer_norm(shifted, gain, bias);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-5f);
  }
}

TEST(Activation, Relu) {
  const Tensor x({3}, {-1, 0, 2});
  const Tensor out = ttx::activation(Act::relu, x);
  EXPECT_EQ(out.data, (std::vector<float>{0, 0, 2}));
}

TEST(Activation, SigmoidAtZero) {
  const Tensor x({1}, {0});
  EXPECT_FLOAT_EQ(ttx::activation(Act::sigmoid, x).data[0], 0.5f);
}

TEST(Activation, GluGateAtZero) {
  const Tensor x({2}, {1, 0});
  const Tensor out = ttx::activation(Act::glu, x);
  ASSERT_EQ(out.numel(), 1);
  EXPECT_FLOAT_EQ(out.data[0], 0.5f);
}

TEST(Activation, GluOddDimensionThrows) {
  const Tensor x({3}, {1, 2, 3});
  EXPECT_THROW(ttx::activation(Act::glu, x), ttx::ShapeError);
}

TEST(Activation, SwishAndTanh) {
  const Tensor x({2}, {0.5f, -0.5f});
  const Tensor sw = ttx::activation(Act::swish, x);
  EXPECT_NEAR(sw.data[0], 0.5f / (1.0f + std::exp(-0.5f)), 1e-6f);
  const Tensor th = ttx::activation(Act::tanh, x);
  EXPECT_NEAR(th.data[1], std::tanh(-0.5f), 1e-6f);
}

TEST(Determinism, RepeatedCallsBitIdentical) {
  std::mt19937 rng(9);
  const Tensor a = random_tensor({6, 5}, rng);
  const Tensor b = random_tensor({5, 7}, rng);
  EXPECT_EQ(ttx::matmul(a, b).data, ttx::matmul(a, b).data);
  const Tensor gain({5}, std::vector<float>(5, 1.0f));
  const Tensor bias({5}, std::vector<float>(5, 0.0f));
  EXPECT_EQ(ttx::layer_norm(a, gain, bias).data, ttx::layer_norm(a, gain, bias).data);
}

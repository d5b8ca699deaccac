#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "finite_difference.hpp"
#include "gradient_cases.hpp"
#include "rtkd/errors.hpp"
#include "rtkd/ops.hpp"
#include "rtkd/rng.hpp"

namespace rtkd {
namespace {

using testing::directional_check;
using testing::random_tensor;
using testing::weighted_sum;

template <typename T>
class NumericsTyped : public ::testing::Test {};
using ScalarTypes = ::testing::Types<float, double>;
TYPED_TEST_SUITE(NumericsTyped, ScalarTypes);

TYPED_TEST(NumericsTyped, MatmulIdentityAndScalar) {
  using T = TypeParam;
  auto eye = Tensor<T>::from_values({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<T>::from_values({2, 2}, {1, 2, 3, 4});
  auto out = matmul(eye, m);
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(out[i], m[i]);
  auto six = matmul(Tensor<T>::from_values({1, 1}, {2}), Tensor<T>::from_values({1, 1}, {3}));
  EXPECT_EQ(six.item(), T(6));
}

TEST(Numerics, MatmulMatchesTripleLoop) {
  Rng rng(7);
  auto a = random_tensor({4, 5}, rng, 1.0, false);
  auto b = random_tensor({5, 3}, rng, 1.0, false);
  auto c = matmul(cast<float>(a), cast<float>(b));
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (Index k = 0; k < 5; ++k) {
        acc += double(float(a[i * 5 + k])) * double(float(b[k * 3 + j]));
      }
      EXPECT_NEAR(c[i * 3 + j], acc, 1e-6);
    }
  }
}

TEST(Numerics, MatmulShapeErrorNamesBothShapes) {
  Tensor<float> a({2, 3});
  Tensor<float> b({4, 2});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
  }
}

TYPED_TEST(NumericsTyped, SoftmaxExamples) {
  using T = TypeParam;
  auto uniform = softmax(Tensor<T>::from_values({4}, {0, 0, 0, 0}), 0);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(uniform[i], 0.25, 1e-7);

  auto saturated = softmax(Tensor<T>::from_values({2}, {1000, 0}), 0);
  EXPECT_NEAR(saturated[0], 1.0, 1e-6);
  EXPECT_NEAR(saturated[1], 0.0, 1e-6);

  // Oracle: direct exp / sum at double precision.
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  auto y = softmax(Tensor<T>::from_values({3}, {1, 2, 3}), 0);
  EXPECT_NEAR(y[0], std::exp(1.0) / z, 1e-6);
  EXPECT_NEAR(y[1], std::exp(2.0) / z, 1e-6);
  EXPECT_NEAR(y[2], std::exp(3.0) / z, 1e-6);
  EXPECT_NEAR(y[0], 0.09003, 1e-5);
  EXPECT_NEAR(y[1], 0.24473, 1e-5);
  EXPECT_NEAR(y[2], 0.66524, 1e-5);
}

TEST(Numerics, SoftmaxRejectsNonFinite) {
  auto x = Tensor<float>::from_values({2}, {1.0f, std::numeric_limits<float>::infinity()});
  EXPECT_THROW(softmax(x, 0), NumericError);
}

TEST(Numerics, SoftmaxSumsToOneAlongEitherAxis) {
  Rng rng(11);
  for (int seed = 0; seed < 100; ++seed) {
    auto x = cast<float>(random_tensor({5, 7}, rng, 10.0, false));
    for (Index axis : {0, 1}) {
      auto y = softmax(x, axis);
      auto m = y.matrix().template cast<double>();
      if (axis == 0) {
        for (Index c = 0; c < 7; ++c) EXPECT_NEAR(m.col(c).sum(), 1.0, 1e-6);
      } else {
        for (Index r = 0; r < 5; ++r) EXPECT_NEAR(m.row(r).sum(), 1.0, 1e-6);
      }
      EXPECT_TRUE((y.values() >= 0.0f).all());
    }
  }
}

TYPED_TEST(NumericsTyped, ReduceMeanAndMax) {
  using T = TypeParam;
  auto x = Tensor<T>::from_values({2, 2}, {1, 3, 5, 7});
  auto m = reduce(x, 1, ReduceMode::kMean);
  ASSERT_EQ(m.shape(), (Shape{2}));
  EXPECT_EQ(m[0], T(2));
  EXPECT_EQ(m[1], T(6));
  auto mx = reduce(x, 0, ReduceMode::kMax);
  EXPECT_EQ(mx[0], T(5));
  EXPECT_EQ(mx[1], T(7));
}

TEST(Numerics, ReduceMaxTieRoutesToLowestIndex) {
  auto x = Tensor<double>::from_values({2}, {2, 2}, true);
  reduce(x, 0, ReduceMode::kMax).backward();
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(Numerics, ReduceRejectsBadAxis) {
  Tensor<float> x({2, 3});
  EXPECT_THROW(reduce(x, 2, ReduceMode::kMean), DimensionError);
}

TYPED_TEST(NumericsTyped, LinearExamples) {
  using T = TypeParam;
  auto y = linear(Tensor<T>::from_values({2}, {1, 2}), Tensor<T>::from_values({2, 2}, {1, 0, 0, 1}),
                  Tensor<T>::from_values({2}, {0, 0}));
  EXPECT_EQ(y[0], T(1));
  EXPECT_EQ(y[1], T(2));
  auto z = linear(Tensor<T>::from_values({2}, {1, 1}), Tensor<T>::from_values({2, 1}, {1, 1}),
                  Tensor<T>::from_values({1}, {1}));
  EXPECT_EQ(z.item(), T(3));
}

TEST(Numerics, LinearMatchesDotProductLoop) {
  Rng rng(3);
  auto x = random_tensor({3, 4}, rng, 1.0, false);
  auto w = random_tensor({4, 2}, rng, 1.0, false);
  auto b = random_tensor({2}, rng, 1.0, false);
  auto y = linear(cast<float>(x), cast<float>(w), cast<float>(b));
  ASSERT_EQ(y.shape(), (Shape{3, 2}));
  for (Index r = 0; r < 3; ++r) {
    for (Index p = 0; p < 2; ++p) {
      double acc = float(b[p]);
      for (Index k = 0; k < 4; ++k) acc += double(float(x[r * 4 + k])) * double(float(w[k * 2 + p]));
      EXPECT_NEAR(y[r * 2 + p], acc, 1e-6);
    }
  }
  EXPECT_THROW(linear(cast<float>(x), cast<float>(b), cast<float>(b)), DimensionError);
}

TYPED_TEST(NumericsTyped, Conv1dExamples) {
  using T = TypeParam;
  const Index d = 9;
  Tensor<T> zeros({2, d});
  Tensor<T> kernel({2, 7});
  Tensor<T> bias({1});
  auto out = conv1d_2to1(zeros, kernel, bias);
  ASSERT_EQ(out.shape(), (Shape{1, d}));
  EXPECT_TRUE((out.values() == T(0)).all());

  Tensor<T> x({2, d});
  x.mutable_values()[3] = 1;  // one-hot at (0, 3)
  kernel.mutable_values()[3] = 1;  // centre tap of channel 0
  auto delta = conv1d_2to1(x, kernel, bias);
  for (Index j = 0; j < d; ++j) EXPECT_EQ(delta[j], j == 3 ? T(1) : T(0));
}

TEST(Numerics, Conv1dMatchesSlidingWindow) {
  Rng rng(5);
  const Index d = 11;
  auto x = random_tensor({2, d}, rng, 1.0, false);
  auto k = random_tensor({2, 7}, rng, 1.0, false);
  auto b = random_tensor({1}, rng, 1.0, false);
  auto y = conv1d_2to1(x, k, b);
  for (Index j = 0; j < d; ++j) {
    double acc = b[0];
    for (Index c = 0; c < 2; ++c) {
      for (Index t = 0; t < 7; ++t) {
        // Explicitly padded copy of the row.
        const Index padded = j + t;
        const double v = (padded < 3 || padded >= d + 3) ? 0.0 : x[c * d + padded - 3];
        acc += k[c * 7 + t] * v;
      }
    }
    EXPECT_NEAR(y[j], acc, 1e-12);
  }
}

TYPED_TEST(NumericsTyped, ElementwiseExamples) {
  using T = TypeParam;
  auto r = relu(Tensor<T>::from_values({2}, {-1, 2}));
  EXPECT_EQ(r[0], T(0));
  EXPECT_EQ(r[1], T(2));
  EXPECT_EQ(gelu(Tensor<T>::from_values({1}, {0})).item(), T(0));

  Rng rng(9);
  auto x = cast<T>(random_tensor({3, 4}, rng, 1.0, false));
  Tensor<T> ones({3, 1});
  ones.mutable_values().setOnes();
  auto y = mul(x, ones);
  for (Index i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
  EXPECT_THROW(mul(x, Tensor<T>({2, 4})), DimensionError);
  EXPECT_THROW(sub(Tensor<T>({1, 4}), x), DimensionError);
}

TEST(Numerics, BroadcastRowAndColumnValues) {
  auto x = Tensor<double>::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  auto col = Tensor<double>::from_values({2, 1}, {10, 20});
  auto row = Tensor<double>::from_values({1, 3}, {1, 0, -1});
  auto a = add(x, col);
  EXPECT_EQ(a[0], 11);
  EXPECT_EQ(a[5], 26);
  auto m = mul(row, x);  // broadcast operand first
  EXPECT_EQ(m[0], 1);
  EXPECT_EQ(m[1], 0);
  EXPECT_EQ(m[5], -6);
}

TYPED_TEST(NumericsTyped, LayerNormExamples) {
  using T = TypeParam;
  auto gamma = Tensor<T>::from_values({3}, {1, 1, 1});
  auto beta = Tensor<T>::from_values({3}, {0, 0, 0});
  auto y = layer_norm(Tensor<T>::from_values({1, 3}, {1, 1, 1}), gamma, beta);
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(y[i], T(0));

  // (x - 0) / sqrt(1 + 1e-5)
  auto z = layer_norm(Tensor<T>::from_values({1, 2}, {-1, 1}), Tensor<T>::from_values({2}, {1, 1}),
                      Tensor<T>::from_values({2}, {0, 0}));
  EXPECT_NEAR(z[0], -1.0 / std::sqrt(1.0 + 1e-5), 1e-6);
  EXPECT_NEAR(z[1], 1.0 / std::sqrt(1.0 + 1e-5), 1e-6);

  Rng rng(2);
  auto x = cast<T>(random_tensor({4, 3}, rng, 3.0, false));
  auto shifted = layer_norm(x, gamma, Tensor<T>::from_values({3}, {0.5, 0.5, 0.5}));
  for (Index r = 0; r < 4; ++r) {
    EXPECT_NEAR(shifted.matrix().row(r).template cast<double>().mean(), 0.5, 1e-6);
  }
}

TEST(Numerics, BackwardSimpleExamples) {
  auto x = Tensor<double>::from_values({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum(x).backward();
  EXPECT_TRUE((x.grad() == 1.0).all());

  auto s = Tensor<double>::from_values({1}, {3}, true);
  sum(mul(s, s)).backward();
  EXPECT_EQ(s.grad()[0], 6.0);
}

TEST(Numerics, BackwardRequiresScalar) {
  auto x = Tensor<double>::from_values({2}, {1, 2}, true);
  EXPECT_THROW(relu(x).backward(), UsageError);
}

TEST(Numerics, BackwardTwiceDoublesGradients) {
  Rng rng(4);
  auto w = random_tensor({3, 3}, rng);
  auto x = random_tensor({2, 3}, rng);
  auto loss = sum(gelu(matmul(x, w)));
  loss.backward();
  const Buffer<double> once_w = w.grad();
  const Buffer<double> once_x = x.grad();
  loss.backward();
  for (Index i = 0; i < once_w.size(); ++i) EXPECT_EQ(w.grad()[i], 2.0 * once_w[i]);
  for (Index i = 0; i < once_x.size(); ++i) EXPECT_EQ(x.grad()[i], 2.0 * once_x[i]);
}

TEST(Numerics, DeterministicBitIdenticalOutputs) {
  auto run = [] {
    Rng rng(123);
    auto x = cast<float>(random_tensor({6, 8}, rng, 1.0, false));
    auto w = cast<float>(random_tensor({8, 8}, rng, 1.0, false));
    return softmax(gelu(matmul(x, w)), 1).values();
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()), 0);
}

// --- gradient checks: 100 seeded random instances per op ---------------------

using testing::GradientCase;
using testing::Leaves;

constexpr int kSeeds = 100;
constexpr double kTolerance = 1e-3;

void expect_gradients(const GradientCase& c) {
  const auto summary = testing::run_gradient_case(c, kSeeds);
  EXPECT_LT(summary.worst_rel_error, kTolerance)
      << c.name << " worst seed " << summary.worst_seed << ": analytic "
      << summary.worst.analytic << " numeric " << summary.worst.numeric;
}

TEST(NumericsGradient, EveryPrimitive) {
  for (const auto& c : testing::primitive_gradient_cases()) expect_gradients(c);
}

}  // namespace
}  // namespace rtkd

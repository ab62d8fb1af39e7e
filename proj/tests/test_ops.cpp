#include <gtest/gtest.h>

#include <cmath>

#include "pivotcap/grad_check.hpp"
#include "pivotcap/nn.hpp"
#include "pivotcap/ops.hpp"

using namespace pivotcap;

namespace {

Tensor t2(std::size_t r, std::size_t c, std::vector<double> v, bool grad = false) {
  return Tensor::from_data({r, c}, std::move(v), grad);
}

}  // namespace

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
  const Tensor p = softmax(t2(1, 2, {0.0, 0.0}), 1);
  EXPECT_DOUBLE_EQ(p.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p.at(0, 1), 0.5);
}

TEST(Ops, IdentityMatmul) {
  Rng rng(3);
  std::vector<double> a(12);
  for (auto& x : a) x = rng.uniform(-2, 2);
  const Tensor eye = t2(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor y = matmul(eye, t2(3, 4, a));
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(y.data()[i], a[i]);
}

TEST(Ops, CrossEntropyOfUniformLogits) {
  const std::size_t t[] = {1};
  EXPECT_NEAR(cross_entropy(t2(1, 3, {0, 0, 0}), t).item(), std::log(3.0), 1e-12);
}

TEST(Ops, CrossEntropySkipsIgnoredPositions) {
  const std::size_t all_ignored[] = {7, 7};
  EXPECT_EQ(cross_entropy(t2(2, 3, {1, 2, 3, 4, 5, 6}), all_ignored, 7).item(), 0.0);
  const std::size_t some[] = {0, 7};
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  EXPECT_NEAR(cross_entropy(t2(2, 3, {1, 2, 3, 4, 5, 6}), some, 7).item(), expected, 1e-12);
}

TEST(Ops, BroadcastSuffixAdd) {
  const Tensor y = add(t2(2, 2, {1, 2, 3, 4}), Tensor::from_data({2}, {10, 20}));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{11, 22, 13, 24}));
  EXPECT_THROW(add(t2(2, 2, {1, 2, 3, 4}), Tensor::from_data({3}, {1, 2, 3})), ShapeError);
}

TEST(Ops, ShapeErrors) {
  EXPECT_THROW(matmul(t2(2, 3, std::vector<double>(6)), t2(2, 3, std::vector<double>(6))), ShapeError);
  EXPECT_THROW(reshape(t2(2, 3, std::vector<double>(6)), {4}), ShapeError);
  const std::size_t bad[] = {5};
  EXPECT_THROW(embedding(t2(2, 3, std::vector<double>(6)), bad), IndexError);
}

TEST(Ops, CausalSoftmaxMasksExactly) {
  const Tensor p = causal_softmax(t2(3, 3, {1, 5, 9, 2, 3, 7, 0, 0, 0}));
  EXPECT_EQ(p.at(0, 0), 1.0);
  EXPECT_EQ(p.at(0, 1), 0.0);
  EXPECT_EQ(p.at(0, 2), 0.0);
  EXPECT_EQ(p.at(1, 2), 0.0);
  EXPECT_NEAR(p.at(1, 0) + p.at(1, 1), 1.0, 1e-15);
  EXPECT_NEAR(p.at(2, 0), 1.0 / 3.0, 1e-15);
}

TEST(Ops, LayerNormHasZeroMeanUnitVariance) {
  const Tensor y = layer_norm(t2(1, 4, {1, 2, 3, 10}), Tensor::full({4}, 1.0), Tensor::zeros({4}), 0.0);
  double m = 0, v = 0;
  for (double x : y.data()) m += x / 4;
  for (double x : y.data()) v += (x - m) * (x - m) / 4;
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Ops, LogsumexpIsShiftStable) {
  const Tensor a = Tensor::from_data({3}, {1000.0, 1000.0, 1000.0});
  EXPECT_NEAR(logsumexp(a).item(), 1000.0 + std::log(3.0), 1e-9);
}

TEST(Ops, L2NormalizeRejectsZeroRow) {
  EXPECT_THROW(l2_normalize_rows(t2(2, 2, {1, 0, 0, 0})), Error);
}

TEST(Autodiff, QuadraticGradient) {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Autodiff, SoftmaxCrossEntropyGradient) {
  Tensor z = t2(1, 4, {0.3, -1.2, 2.0, 0.5}, true);
  const std::size_t target[] = {2};
  backward(cross_entropy(z, target));
  double denom = 0;
  for (double v : z.data()) denom += std::exp(v);
  for (std::size_t k = 0; k < 4; ++k) {
    const double p = std::exp(z.data()[k]) / denom;
    EXPECT_NEAR(z.grad()[k], p - (k == 2 ? 1.0 : 0.0), 1e-14);
  }
}

TEST(Autodiff, DetachedLeafGetsNoGradient) {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor y = Tensor::from_data({2}, {3.0, 4.0}, true);
  backward(sum(mul(x, y.detach())));
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(y.has_grad());
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = sum(mul(x, x));
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autodiff, LeafGradientsAccumulate) {
  Tensor x = Tensor::from_data({1}, {3.0}, true);
  backward(sum(scale(x, 2.0)));
  backward(sum(scale(x, 2.0)));
  EXPECT_EQ(x.grad()[0], 4.0);
  x.zero_grad();
  backward(sum(scale(x, 2.0)));
  EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Autodiff, SharedSubexpressionSumsPaths) {
  Tensor x = Tensor::from_data({1}, {3.0}, true);
  const Tensor y = mul(x, x);
  backward(sum(add(y, y)));
  EXPECT_EQ(x.grad()[0], 12.0);
}

TEST(GradCheck, QuadraticIsTight) {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  EXPECT_LT(numeric_grad_check([](const Tensor& v) { return sum(mul(v, v)); }, x), 1e-6);
  EXPECT_EQ(x.data()[0], 1.0);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  EXPECT_EQ(numeric_grad_check([](const Tensor&) { return Tensor::scalar(4.0); }, x), 0.0);
}

TEST(GradCheck, DetectsWrongGradient) {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  // Value of x*x but gradient of 3x.
  const auto f = [](const Tensor& v) {
    const Tensor lin = scale(v, 3.0);
    const Tensor gap = sub(mul(v, v), lin).detach();
    return sum(add(lin, gap));
  };
  EXPECT_GT(numeric_grad_check(f, x), 1e-2);
}

TEST(GradCheck, NonFiniteIsInfinite) {
  Tensor x = Tensor::from_data({1}, {-1.0}, true);
  EXPECT_TRUE(std::isinf(numeric_grad_check([](const Tensor& v) { return sum(log(v)); }, x)));
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differs = differs || x != c.normal();
  }
  EXPECT_TRUE(differs);
}

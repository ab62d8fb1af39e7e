#include <gtest/gtest.h>

#include <cmath>

#include "pivotcap/alignment.hpp"
#include "pivotcap/grad_check.hpp"
#include "pivotcap/ops.hpp"

using namespace pivotcap;

namespace {

Tensor rows(std::size_t n, std::size_t d, std::vector<double> v, bool grad = false) {
  return Tensor::from_data({n, d}, std::move(v), grad);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) d += a[k] * b[k], na += a[k] * a[k], nb += b[k] * b[k];
  return d / std::sqrt(na * nb);
}

// Loss written straight from the definition, pair by pair.
double brute_force(const std::vector<std::vector<double>>& s, const std::vector<IndexPair>& pairs, double tau,
                   bool inclusive) {
  double total = 0.0;
  for (auto [i, j] : pairs) {
    double z = 0.0;
    bool any = false;
    for (std::size_t k = 0; k < s[i].size(); ++k) {
      if (k == j && !inclusive) continue;
      z += std::exp(s[i][k] / tau);
      any = true;
    }
    if (any) total += -std::log(std::exp(s[i][j] / tau) / z);
  }
  return total;
}

std::vector<std::vector<double>> split_rows(const Tensor& t) {
  std::vector<std::vector<double>> out(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) out[i][j] = t.at(i, j);
  return out;
}

}  // namespace

TEST(Similarity, HandValues) {
  const Tensor s = similarity_matrix(rows(2, 2, {1, 1, 0, 3}), rows(2, 2, {1, 0, 0, 2}));
  EXPECT_NEAR(s.at(0, 0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.at(1, 1), 1.0, 1e-15);
  EXPECT_NEAR(s.at(1, 0), 0.0, 1e-15);
}

TEST(Similarity, ZeroRowIsNamed) {
  try {
    similarity_matrix(rows(2, 2, {1, 1, 0, 0}), rows(1, 2, {1, 0}));
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos) << e.what();
  }
}

TEST(PairSelection, Bounds) {
  const Tensor s = rows(2, 2, {0.1, 0.2, -0.3, 0.0});
  EXPECT_TRUE(select_positive_pairs(s, 0.5).empty());
  EXPECT_EQ(select_positive_pairs(s, -1.0).size(), 4u);
}

TEST(PairSelection, ThreeByThreeEnumerated) {
  const Tensor s = rows(3, 3, {0.9, 0.5, 0.1, 0.6, -0.2, 0.51, 0.3, 0.49, 1.0});
  const std::vector<IndexPair> expected = {{0, 0}, {1, 0}, {1, 2}, {2, 2}};
  EXPECT_EQ(select_positive_pairs(s, 0.5), expected);
}

TEST(Contrastive, LiteralHandValue) {
  const Tensor s = rows(1, 2, {1.0, 0.0});
  const auto r = contrastive_loss(s, {{0, 0}}, 1.0, false);
  EXPECT_NEAR(r.loss.item(), -1.0, 1e-15);
  EXPECT_EQ(r.pairs, 1u);
  EXPECT_FALSE(r.empty);
}

TEST(Contrastive, ConventionalHandValue) {
  const Tensor s = rows(1, 2, {1.0, 0.0});
  EXPECT_NEAR(contrastive_loss(s, {{0, 0}}, 1.0, true).loss.item(), -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)),
              1e-15);
  EXPECT_NEAR(contrastive_loss(s, {{0, 0}}, 1.0, true).loss.item(), 0.3133, 1e-4);
}

TEST(Contrastive, UniformIsLogN) {
  const Tensor s = rows(2, 5, std::vector<double>(10, 0.4));
  const auto r = contrastive_loss(s, {{0, 1}, {1, 3}}, 0.2, true);
  EXPECT_NEAR(r.loss.item(), 2.0 * std::log(5.0), 1e-12);
}

TEST(Contrastive, EmptyPairSetIsFlagged) {
  const auto r = contrastive_loss(rows(1, 2, {1.0, 0.0}), {}, 1.0, false);
  EXPECT_TRUE(r.empty);
  EXPECT_EQ(r.loss.item(), 0.0);
}

TEST(Contrastive, ValidatesArguments) {
  EXPECT_THROW(contrastive_loss(rows(1, 2, {1.0, 0.0}), {{0, 0}}, 0.0, false), Error);
  EXPECT_THROW(contrastive_loss(rows(1, 2, {1.0, 0.0}), {{0, 2}}, 1.0, false), IndexError);
}

TEST(Contrastive, MatchesBruteForceOnRandomMatrices) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(20);
    for (auto& x : v) x = rng.uniform(-1, 1);
    const Tensor s = rows(4, 5, v);
    const double rho = rng.uniform(-0.5, 0.5);
    const double tau = rng.uniform(0.05, 2.0);
    const auto pairs = select_positive_pairs(s, rho);
    for (bool inclusive : {false, true}) {
      EXPECT_NEAR(contrastive_loss(s, pairs, tau, inclusive).loss.item(), brute_force(split_rows(s), pairs, tau, inclusive),
                  1e-9);
    }
  }
}

TEST(Contrastive, ThresholdIsStrict) {
  const Tensor s = rows(1, 3, {0.5, 0.7, 0.1});
  EXPECT_EQ(select_positive_pairs(s, 0.5), (std::vector<IndexPair>{{0, 1}}));
}

TEST(Contrastive, IncreasingPositiveNeverIncreasesLoss) {
  for (bool inclusive : {false, true}) {
    double prev = 1e300;
    for (double p = -0.9; p <= 0.95; p += 0.05) {
      const double l = contrastive_loss(rows(1, 3, {p, 0.2, -0.4}), {{0, 0}}, 0.3, inclusive).loss.item();
      EXPECT_LE(l, prev);
      prev = l;
    }
  }
}

TEST(Alignment, RotationInvariance) {
  Rng rng(5);
  std::vector<double> a(6), b(9);
  for (auto& x : a) x = rng.uniform(-1, 1);
  for (auto& x : b) x = rng.uniform(-1, 1);
  const double th = 0.7;
  // Rotation in the first two coordinates of R^3.
  const Tensor rot = rows(3, 3, {std::cos(th), std::sin(th), 0, -std::sin(th), std::cos(th), 0, 0, 0, 1});
  AlignmentConfig cfg;
  const auto base = align_nodes(rows(2, 3, a), rows(3, 3, b), -0.2, 0.3, cfg);
  const auto turned = align_nodes(matmul(rows(2, 3, a), rot), matmul(rows(3, 3, b), rot), -0.2, 0.3, cfg);
  EXPECT_EQ(base.pairs, turned.pairs);
  EXPECT_NEAR(base.loss.item(), turned.loss.item(), 1e-9);
}

TEST(Alignment, TwoByTwoComposition) {
  const std::vector<double> v = {1.0, 2.0, -0.5, 0.3, 0.5, 0.5};
  const std::vector<double> l = {0.9, 1.8, 0.0, -1.0, 0.2, 0.1};
  AlignmentConfig cfg;
  cfg.mean_over_pairs = false;
  const double rho = 0.1, tau = 0.25;
  const auto r = align_nodes(rows(2, 3, v), rows(2, 3, l), rho, tau, cfg);
  std::vector<std::vector<double>> s(2, std::vector<double>(2));
  std::vector<IndexPair> pairs;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      s[i][j] = cosine({v[3 * i], v[3 * i + 1], v[3 * i + 2]}, {l[3 * j], l[3 * j + 1], l[3 * j + 2]});
      if (s[i][j] > rho) pairs.push_back({i, j});
    }
  EXPECT_EQ(r.pairs, pairs.size());
  EXPECT_NEAR(r.loss.item(), brute_force(s, pairs, tau, false), 1e-12);
  cfg.mean_over_pairs = true;
  EXPECT_NEAR(align_nodes(rows(2, 3, v), rows(2, 3, l), rho, tau, cfg).loss.item(),
              brute_force(s, pairs, tau, false) / static_cast<double>(pairs.size()), 1e-12);
}

TEST(Alignment, ZeroRowsAreLeftOut) {
  AlignmentConfig cfg;
  const auto r = align_nodes(rows(2, 2, {0, 0, 1, 0}), rows(2, 2, {1, 0.1, 0, 1}), 0.5, 1.0, cfg);
  EXPECT_EQ(r.pairs, 1u);
}

TEST(Alignment, ThreeByThreeGradientCheck) {
  Rng rng(17);
  std::vector<double> a(9), b(9);
  for (auto& x : a) x = rng.uniform(-1, 1);
  for (auto& x : b) x = rng.uniform(-1, 1);
  Tensor va = rows(3, 3, a, true), vb = rows(3, 3, b, true);
  AlignmentConfig cfg;
  for (bool inclusive : {false, true}) {
    cfg.include_positive_in_denominator = inclusive;
    const auto f = [&](const Tensor&) { return align_nodes(va, vb, -0.3, 0.5, cfg).loss; };
    ASSERT_GT(align_nodes(va, vb, -0.3, 0.5, cfg).pairs, 0u);
    EXPECT_LT(numeric_grad_check(f, va), 1e-4);
    EXPECT_LT(numeric_grad_check(f, vb), 1e-4);
  }
}

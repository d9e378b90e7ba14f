#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oiqa/error.hpp"
#include "oiqa/metrics.hpp"

namespace oiqa {
namespace {

// Frozen from a reference statistics package.
constexpr double kPlccToy = 0.32732683535398849;
constexpr double kSrccTiedToy = 0.94868329805051388;

double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx) / std::sqrt(syy);
}

std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

double brute_rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(a[i] - b[i], 2);
  return std::sqrt(s / static_cast<double>(a.size()));
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, bool ties) {
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_int_distribution<int> level(0, 6);
  std::vector<double> v(n);
  for (double& x : v) x = ties ? level(rng) * 0.5 : u(rng);
  return v;
}

TEST(Plcc, AffineAndToyCases) {
  const std::vector<double> t{0.5, 1.0, 3.0, 2.0, -1.0};
  std::vector<double> affine, neg;
  for (double v : t) {
    affine.push_back(2 * v + 3);
    neg.push_back(-v);
  }
  EXPECT_NEAR(plcc(affine, t), 1.0, 1e-15);
  EXPECT_NEAR(plcc(neg, t), -1.0, 1e-15);
  EXPECT_NEAR(plcc(std::vector<double>{1, 2, 4}, std::vector<double>{1, 3, 2}), kPlccToy, 1e-15);
}

TEST(Plcc, InvariantUnderPositiveAffineMaps) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_vector(rng, 30, false), b = random_vector(rng, 30, false);
    std::vector<double> a2;
    for (double v : a) a2.push_back(3.5 * v - 7.0);
    EXPECT_NEAR(plcc(a2, b), plcc(a, b), 1e-12);
    EXPECT_NEAR(plcc(a, a2), 1.0, 1e-12);
  }
}

TEST(Plcc, Errors) {
  EXPECT_THROW(plcc(std::vector<double>{1}, std::vector<double>{1}), MetricError);
  EXPECT_THROW(plcc(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), MetricError);
  EXPECT_THROW(plcc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), MetricError);
}

TEST(Srcc, MonotoneAndTiedCases) {
  EXPECT_EQ(srcc(std::vector<double>{1, 5, 9, 10}, std::vector<double>{-3, 0, 2, 100}), 1.0);
  EXPECT_EQ(srcc(std::vector<double>{1, 5, 9, 10}, std::vector<double>{4, 3, 2, 1}), -1.0);
  EXPECT_NEAR(srcc(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4}), kSrccTiedToy, 1e-15);
  EXPECT_EQ(fractional_ranks(std::vector<double>{3, 1, 3, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(Srcc, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_vector(rng, 25, i % 2 == 0), b = random_vector(rng, 25, false);
    std::vector<double> e, c;
    for (double v : a) {
      e.push_back(std::exp(v));
      c.push_back(v * v * v);
    }
    EXPECT_EQ(srcc(e, b), srcc(a, b));
    EXPECT_EQ(srcc(c, b), srcc(a, b));
    EXPECT_EQ(srcc(b, e), srcc(b, a));
  }
}

TEST(Srcc, AllTiedThrows) {
  EXPECT_THROW(srcc(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}), MetricError);
}

TEST(Rmse, Cases) {
  EXPECT_EQ(rmse(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(rmse(std::vector<double>{3, 4}, std::vector<double>{0, 0}), std::sqrt(12.5));
  EXPECT_THROW(rmse(std::vector<double>{1}, std::vector<double>{}), MetricError);
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), MetricError);
}

TEST(Rmse, SymmetricAndTriangle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_vector(rng, 10, false), b = random_vector(rng, 10, false), c = random_vector(rng, 10, false);
    EXPECT_EQ(rmse(a, b), rmse(b, a));
    EXPECT_LE(rmse(a, c), rmse(a, b) + rmse(b, c) + 1e-12);
  }
}

TEST(Metrics, AgreeWithBruteForceOnRandomVectors) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> len(3, 60);
  for (int i = 0; i < 1000; ++i) {
    const bool ties = i % 3 == 0;
    const std::size_t n = len(rng);
    auto a = random_vector(rng, n, ties), b = random_vector(rng, n, ties);
    a[0] = -10;  // keep both sides non-constant
    b[0] = -10;
    EXPECT_NEAR(plcc(a, b), brute_pearson(a, b), 1e-9);
    EXPECT_NEAR(srcc(a, b), brute_pearson(brute_ranks(a), brute_ranks(b)), 1e-9);
    EXPECT_NEAR(rmse(a, b), brute_rmse(a, b), 1e-9);
  }
}

TEST(LogisticRemap, RecoversSigmoidRelation) {
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(-3.0 + 0.15 * i);
    y.push_back(1.0 + 4.0 / (1.0 + std::exp(-(x.back() - 0.2) / 0.7)));
  }
  const auto fit = logistic_remap(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fit[i], y[i], 1e-5);
  EXPECT_GT(plcc(fit, y), plcc(x, y));
}

}  // namespace
}  // namespace oiqa

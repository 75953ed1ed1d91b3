#include "pkcurv/errors.hpp"
#include "pkcurv/symfun.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

using namespace pkcurv;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  int i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Subset enumeration oracle.
double sigma_bruteforce(int k, const Eigen::VectorXd& lam) {
  const int m = static_cast<int>(lam.size());
  double total = 0.0;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    double prod = 1.0;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) prod *= lam(i);
    total += prod;
  }
  return total;
}

}  // namespace

TEST(Sigma, SpecExamples) {
  EXPECT_DOUBLE_EQ(sigma(2, vec({1, 2, 3})), 11.0);
  EXPECT_DOUBLE_EQ(sigma(0, vec({5, -1})), 1.0);
  EXPECT_DOUBLE_EQ(sigma(3, vec({1, 1, 1})), 1.0);
}

TEST(Sigma, OutOfRangeLevelThrows) {
  EXPECT_THROW(sigma(-1, vec({1, 2})), DomainError);
  EXPECT_THROW(sigma(3, vec({1, 2})), DomainError);
}

TEST(Sigma, MatchesSubsetEnumeration) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.5);
  for (int m = 1; m <= 10; ++m) {
    Eigen::VectorXd lam(m);
    for (int i = 0; i < m; ++i) lam(i) = g(rng);
    for (int k = 0; k <= m; ++k) {
      const double ref = sigma_bruteforce(k, lam);
      EXPECT_NEAR(sigma(k, lam), ref, 1e-12 * std::max(1.0, std::abs(ref))) << m << " " << k;
    }
  }
}

TEST(SigmaMinor, SpecExamples) {
  const std::array<int, 1> one{0};
  const std::array<int, 2> two{0, 1};
  EXPECT_DOUBLE_EQ(sigma_minor(1, vec({1, 2, 3}), one), 5.0);
  EXPECT_DOUBLE_EQ(sigma_minor(1, vec({1, 2, 3}), two), 3.0);
  EXPECT_DOUBLE_EQ(sigma_minor(0, vec({4, -2, 7}), two), 1.0);
}

TEST(SigmaMinor, RejectsBadIndices) {
  const std::array<int, 2> dup{1, 1};
  const std::array<int, 1> far{3};
  EXPECT_THROW(sigma_minor(1, vec({1, 2, 3}), dup), DomainError);
  EXPECT_THROW(sigma_minor(1, vec({1, 2, 3}), far), DomainError);
}

TEST(QuotientRoot, SpecExamples) {
  EXPECT_NEAR(quotient_root(2, 0, vec({1, 1, 1})), std::sqrt(3.0), 1e-15);
  EXPECT_DOUBLE_EQ(quotient_root(1, 0, vec({2, 3})), 5.0);
  EXPECT_NEAR(quotient_root(2, 1, vec({1, 2, 3})), 11.0 / 6.0, 1e-15);
}

TEST(QuotientRoot, ConeViolationCarriesLevel) {
  try {
    quotient_root(3, 0, vec({1, 1, -0.1}));
    FAIL() << "expected ConeViolation";
  } catch (const ConeViolation& e) {
    EXPECT_EQ(e.level(), 3);
  }
}

TEST(GammaCone, SpecExamples) {
  EXPECT_TRUE(in_gamma_cone(2, vec({1, 1, -0.1})).inside);
  const ConeTest t = in_gamma_cone(3, vec({1, 1, -0.1}));
  EXPECT_FALSE(t.inside);
  EXPECT_EQ(t.first_failure, 3);
  const ConeTest z = in_gamma_cone(1, vec({0, 0}));
  EXPECT_FALSE(z.inside);
  EXPECT_EQ(z.first_failure, 1);
}

TEST(SigmaGradient, SpecExamples) {
  const Eigen::VectorXd g = sigma_gradient(2, vec({1, 2, 3}));
  EXPECT_DOUBLE_EQ(g(0), 5.0);
  EXPECT_DOUBLE_EQ(g(1), 4.0);
  EXPECT_DOUBLE_EQ(g(2), 3.0);
  EXPECT_TRUE(sigma_gradient(1, vec({-3, 4, 9})).isApproxToConstant(1.0));
  const Eigen::VectorXd c = sigma_gradient(3, vec({2, 0, 5}));
  EXPECT_DOUBLE_EQ(c(1), 10.0);
}

TEST(SigmaGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(1.0, 0.5);
  for (int m = 2; m <= 6; ++m) {
    Eigen::VectorXd lam(m);
    for (int i = 0; i < m; ++i) lam(i) = g(rng);
    for (int k = 1; k <= m; ++k) {
      const Eigen::VectorXd grad = sigma_gradient(k, lam);
      for (int i = 0; i < m; ++i) {
        Eigen::VectorXd up = lam, dn = lam;
        up(i) += 1e-6;
        dn(i) -= 1e-6;
        const double fd = (sigma(k, up) - sigma(k, dn)) / 2e-6;
        EXPECT_NEAR(fd, grad(i), 1e-6 * std::max(1.0, std::abs(grad(i))));
      }
    }
  }
}

TEST(QuotientDerivatives, HessianMatchesDifferencesOfGradient) {
  const Eigen::VectorXd lam = vec({1.3, 0.7, 1.1, 0.9});
  for (int k = 1; k <= 4; ++k) {
    for (int l = 0; l < k; ++l) {
      const ScalarDerivatives d = quotient_derivatives(k, l, lam, true);
      for (int j = 0; j < 4; ++j) {
        Eigen::VectorXd up = lam, dn = lam;
        up(j) += 1e-6;
        dn(j) -= 1e-6;
        const Eigen::VectorXd fd = (quotient_derivatives(k, l, up, false).gradient -
                                    quotient_derivatives(k, l, dn, false).gradient) /
                                   2e-6;
        for (int i = 0; i < 4; ++i) EXPECT_NEAR(d.hessian(i, j), fd(i), 1e-6);
      }
    }
  }
}

TEST(Binomial, SmallValues) {
  EXPECT_DOUBLE_EQ(binomial(6, 3), 20.0);
  EXPECT_DOUBLE_EQ(binomial(3, 0), 1.0);
  EXPECT_DOUBLE_EQ(binomial(3, 4), 0.0);
}

#include "pkcurv/errors.hpp"
#include "pkcurv/exterior.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace pkcurv;

namespace {

Eigen::MatrixXd random_symmetric(int n, std::mt19937_64& rng, double scale = 0.3) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) a(i, j) = a(j, i) = g(rng);
  return a;
}

}  // namespace

TEST(MultiIndexTable, ThreeChooseTwo) {
  const MultiIndexTable t(3, 2);
  ASSERT_EQ(t.size(), 3);
  EXPECT_EQ(t.index(0), (std::vector<int>{0, 1}));
  EXPECT_EQ(t.index(1), (std::vector<int>{0, 2}));
  EXPECT_EQ(t.index(2), (std::vector<int>{1, 2}));
  EXPECT_EQ(t.complement(0), (std::vector<int>{2}));
  EXPECT_EQ(t.complement(1), (std::vector<int>{1}));
  EXPECT_EQ(t.complement(2), (std::vector<int>{0}));
}

TEST(MultiIndexTable, AdjacencySign) {
  const MultiIndexTable t(3, 2);
  const auto& adj = t.adjacency();
  const auto it = std::find_if(adj.begin(), adj.end(),
                               [](const auto& a) { return a.I == 0 && a.J == 1; });
  ASSERT_NE(it, adj.end());
  EXPECT_EQ(it->i, 1);
  EXPECT_EQ(it->j, 2);
  EXPECT_EQ(it->sign, 1);
}

TEST(MultiIndexTable, FullIndex) {
  const MultiIndexTable t(2, 2);
  EXPECT_EQ(t.size(), 1);
  EXPECT_TRUE(t.adjacency().empty());
}

TEST(MultiIndexTable, RejectsBadSizes) {
  EXPECT_THROW(MultiIndexTable(3, 0), DomainError);
  EXPECT_THROW(MultiIndexTable(3, 4), DomainError);
  EXPECT_THROW(MultiIndexTable(13, 2), DomainError);
}

TEST(DerivationMatrix, Diagonal) {
  const auto t = build_table(3, 2);
  Eigen::MatrixXd a = Eigen::Vector3d(1, 2, 3).asDiagonal();
  const DerivationMatrix W = derivation_matrix(SymMatrix::from_dense(a), t);
  const Eigen::MatrixXd expected = Eigen::Vector3d(3, 4, 5).asDiagonal();
  EXPECT_TRUE(W.entries.isApprox(expected));
}

TEST(DerivationMatrix, OffDiagonalSign) {
  const auto t = build_table(3, 2);
  SymMatrix a(3);
  a(0, 2) = 0.7;
  const DerivationMatrix W = derivation_matrix(a, t);
  EXPECT_DOUBLE_EQ(W.entries(0, 2), -0.7);
  EXPECT_DOUBLE_EQ(W.entries(2, 0), -0.7);
  EXPECT_DOUBLE_EQ(W.entries(0, 1), 0.0);
}

TEST(DerivationMatrix, FullPowerIsTrace) {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd a = random_symmetric(4, rng);
  const DerivationMatrix W = derivation_matrix(SymMatrix::from_dense(a), build_table(4, 4));
  ASSERT_EQ(W.entries.rows(), 1);
  EXPECT_NEAR(W.entries(0, 0), a.trace(), 1e-14);
}

TEST(DerivationMatrix, EigenvaluesAreIndexSums) {
  std::mt19937_64 rng(17);
  for (int n = 2; n <= 6; ++n) {
    for (int p = 1; p <= n; ++p) {
      const auto t = build_table(n, p);
      const Eigen::MatrixXd a = random_symmetric(n, rng, 1.0);
      const DerivationMatrix W = derivation_matrix(SymMatrix::from_dense(a), t);
      Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(W.entries).eigenvalues();
      const Eigen::VectorXd kappa = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues();
      Eigen::VectorXd sums = lambda_of(kappa, *t);
      std::sort(sums.data(), sums.data() + sums.size());
      EXPECT_LT((ev - sums).cwiseAbs().maxCoeff(), 1e-9) << n << "," << p;
      EXPECT_NEAR(W.entries.trace(), binomial(n - 1, p - 1) * a.trace(), 1e-10);
    }
  }
}

TEST(DerivationMatrix, DimensionMismatch) {
  EXPECT_THROW(derivation_matrix(SymMatrix(4), build_table(3, 2)), DomainError);
}

TEST(Lambda, Examples) {
  const auto t = build_table(3, 2);
  const Eigen::VectorXd L = lambda_of(Eigen::Vector3d(1, 2, 3), *t);
  EXPECT_TRUE(L.isApprox(Eigen::Vector3d(3, 4, 5)));
  const Eigen::VectorXd ones = lambda_of(Eigen::VectorXd::Ones(5), *build_table(5, 3));
  EXPECT_TRUE(ones.isApproxToConstant(3.0));
  EXPECT_THROW(lambda_of(Eigen::VectorXd::Ones(4), *t), DomainError);
}

TEST(PkCone, Examples) {
  const auto t = build_table(3, 2);
  EXPECT_TRUE(in_pk_cone(Eigen::Vector3d(-0.4, 1, 1), 3, *t).inside);
  EXPECT_FALSE(in_pk_cone(Eigen::Vector3d(-1, -1, -1), 1, *t).inside);
  const auto t1 = build_table(3, 1);
  const Eigen::Vector3d kappa(1, 1, -0.1);
  for (int k = 1; k <= 3; ++k)
    EXPECT_EQ(in_pk_cone(kappa, k, *t1).inside, in_gamma_cone(k, kappa).inside);
}

TEST(FAndGradient, IdentityMatrix) {
  const auto t = build_table(3, 2);
  const CurvaturePoint pt = F_and_gradient(SymMatrix::identity(3), 2, 2, 0, t);
  EXPECT_NEAR(pt.F, 12.0, 1e-12);
  const Eigen::MatrixXd g = pt.F_grad.dense();
  EXPECT_TRUE(g.isApprox(8.0 * Eigen::MatrixXd::Identity(3, 3), 1e-12));
}

TEST(FAndGradient, LinearCase) {
  std::mt19937_64 rng(2);
  Eigen::MatrixXd a = random_symmetric(4, rng) + Eigen::MatrixXd::Identity(4, 4);
  const auto t = build_table(4, 2);
  const CurvaturePoint pt = F_and_gradient(SymMatrix::from_dense(a), 2, 1, 0, t);
  EXPECT_NEAR(pt.F, 3.0 * a.trace(), 1e-12);
  EXPECT_TRUE(pt.F_grad.dense().isApprox(3.0 * Eigen::MatrixXd::Identity(4, 4), 1e-12));
}

TEST(FAndGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 3;
    const int p = 1 + trial % n;
    const auto t = build_table(n, p);
    const int N = t->size();
    const int k = 1 + trial % std::min(N, 4);
    const int l = trial % k;
    const Eigen::MatrixXd a = random_symmetric(n, rng) + Eigen::MatrixXd::Identity(n, n);
    const CurvaturePoint pt = F_and_gradient(SymMatrix::from_dense(a), p, k, l, t);
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
        e(i, j) = e(j, i) = 1.0;
        const double h = 1e-6;
        const double up = F_and_gradient(SymMatrix::from_dense(a + h * e), p, k, l, t).F;
        const double dn = F_and_gradient(SymMatrix::from_dense(a - h * e), p, k, l, t).F;
        const double fd = (up - dn) / (2 * h);
        const double analytic = (i == j ? 1.0 : 2.0) * pt.F_grad(i, j);
        EXPECT_NEAR(fd, analytic, 1e-6 * std::max(1.0, std::abs(analytic)));
      }
    }
  }
}

TEST(FAndGradient, ConeViolation) {
  const auto t = build_table(3, 2);
  EXPECT_THROW(F_and_gradient(SymMatrix::from_dense(-Eigen::MatrixXd::Identity(3, 3)), 2, 1, 0, t),
               ConeViolation);
}

TEST(FHessian, LinearIsZero) {
  std::mt19937_64 rng(4);
  const auto t = build_table(4, 2);
  const Eigen::MatrixXd a = random_symmetric(4, rng) + Eigen::MatrixXd::Identity(4, 4);
  const Eigen::MatrixXd xi = random_symmetric(4, rng, 1.0);
  EXPECT_NEAR(F_hessian_quadratic_form(SymMatrix::from_dense(a), SymMatrix::from_dense(xi), 2, 1,
                                       0, t),
              0.0, 1e-12);
}

TEST(FHessian, MatchesSecondDifferences) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 2;
    const int p = 1 + trial % n;
    const auto t = build_table(n, p);
    const int k = 1 + trial % std::min(t->size(), 3);
    const int l = (trial / 2) % k;
    const Eigen::MatrixXd a = random_symmetric(n, rng) + Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd xi = random_symmetric(n, rng, 1.0);
    const double analytic = F_hessian_quadratic_form(SymMatrix::from_dense(a),
                                                     SymMatrix::from_dense(xi), p, k, l, t);
    const double h = 1e-4;
    auto F = [&](double s) {
      return F_and_gradient(SymMatrix::from_dense(a + s * xi), p, k, l, t).F;
    };
    const double fd = (F(h) - 2 * F(0) + F(-h)) / (h * h);
    EXPECT_NEAR(fd, analytic, 1e-5 * std::max(1.0, std::abs(analytic)));
  }
}

TEST(FHessian, EulerHomogeneity) {
  std::mt19937_64 rng(12);
  const auto t = build_table(4, 2);
  const Eigen::MatrixXd a = random_symmetric(4, rng) + Eigen::MatrixXd::Identity(4, 4);
  for (int k = 1; k <= 4; ++k) {
    for (int l = 0; l < k; ++l) {
      const SymMatrix A = SymMatrix::from_dense(a);
      const double F = F_and_gradient(A, 2, k, l, t).F;
      const double q = F_hessian_quadratic_form(A, A, 2, k, l, t);
      EXPECT_NEAR(q, (k - l) * (k - l - 1) * F, 1e-9 * std::max(1.0, std::abs(F)));
    }
  }
}

TEST(FHessian, DegenerateEigenvalues) {
  const auto t = build_table(3, 2);
  const SymMatrix A = SymMatrix::identity(3);
  Eigen::MatrixXd xi(3, 3);
  xi << 0.2, 0.5, -0.1, 0.5, -0.3, 0.4, -0.1, 0.4, 0.6;
  const double analytic = F_hessian_quadratic_form(A, SymMatrix::from_dense(xi), 2, 2, 0, t);
  const double h = 1e-4;
  auto F = [&](double s) {
    return F_and_gradient(SymMatrix::from_dense(Eigen::MatrixXd::Identity(3, 3) + s * xi), 2, 2,
                          0, t)
        .F;
  };
  EXPECT_NEAR((F(h) - 2 * F(0) + F(-h)) / (h * h), analytic, 1e-5);
}

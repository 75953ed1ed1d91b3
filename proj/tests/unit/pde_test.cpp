#include "pkcurv/errors.hpp"
#include "pkcurv/pde.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace pkcurv;

namespace {

ProblemSpec sphere_problem() {
  ProblemSpec s;
  s.n = 3;
  s.p = 2;
  s.k = 2;
  s.l = 0;
  s.b = -3.0;
  s.q = 0.0;
  s.f = RhsFunction::constant(1.0);
  return s;
}

Eigen::VectorXd smooth_field(const SphereGrid& grid, double a0, double a1, double a2) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXd x = grid.point(i);
    u(static_cast<Eigen::Index>(i)) =
        a0 * x(0) + a1 * x(1) * x(grid.dim()) + a2 * x(grid.dim() - 1) * x(grid.dim() - 1);
  }
  return u;
}

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST(ProblemSpec, DerivedQuantities) {
  const ProblemSpec s = sphere_problem();
  EXPECT_EQ(s.N(), 3);
  EXPECT_DOUBLE_EQ(s.exponent(), 1.0);
  EXPECT_DOUBLE_EQ(s.sphere_constant(), 12.0);
  EXPECT_EQ(s.regime(), ProblemSpec::Regime::nonhomogeneous);
  ProblemSpec h = s;
  h.b = -2.0;
  EXPECT_EQ(h.regime(), ProblemSpec::Regime::homogeneous);
}

TEST(ProblemSpec, Validation) {
  ProblemSpec s = sphere_problem();
  s.l = 2;
  try {
    s.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("0 <= l < k"), std::string::npos);
  }
  s = sphere_problem();
  s.b = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = sphere_problem();
  s.k = 4;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(ProblemSpec, WarningsOutsideEstimateWindow) {
  ProblemSpec s = sphere_problem();
  EXPECT_FALSE(s.warnings().empty());  // k = 2
  s.n = 4;
  s.p = 2;
  s.k = 3;
  s.l = 1;
  s.b = -3.0;
  EXPECT_TRUE(s.warnings().empty());
}

TEST(ProblemSpec, JsonRoundTrip) {
  ProblemSpec s = sphere_problem();
  s.f = RhsFunction::harmonic({1.0, 0.2, 0.0, -0.1}, 0.05);
  s.epsilon = 0.1;
  const ProblemSpec t = ProblemSpec::from_json(s.to_json());
  EXPECT_EQ(t.to_json(), s.to_json());
}

TEST(ProblemSpec, MalformedJsonReportsPosition) {
  const auto path = temp_file("pkcurv_bad.json", "{\n  \"n\": 3,\n  \"p\": 2 \"k\": 2\n}\n");
  try {
    ProblemSpec::load(path);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
}

TEST(ProblemSpec, TableFunction) {
  auto grid = SphereGrid::create(2, 8);
  std::string text = "theta,phi,f\n";
  for (std::size_t i = 0; i < grid->size(); ++i) text += "0,0," + std::to_string(1.0 + 0.01 * i) + "\n";
  const auto path = temp_file("pkcurv_table.csv", text);
  const RhsFunction f = RhsFunction::from_json({{"type", "table"}, {"path", path.string()}});
  const Eigen::VectorXd v = f.sample(*grid);
  EXPECT_NEAR(v(5), 1.05, 1e-12);
  EXPECT_THROW(f.sample(*SphereGrid::create(2, 10)), ConfigError);
}

TEST(RhsFunction, ScalingAndClipping) {
  Eigen::VectorXd x(4);
  x << 0.6, 0.0, 0.8, 0.0;
  const RhsFunction e = RhsFunction::exp_harmonic({0.0, 0.2});
  EXPECT_NEAR(*e.scaled(2.0).value(x), 2.0 * std::exp(0.12), 1e-14);
  const RhsFunction h = RhsFunction::harmonic({0.1, -1.0}, 0.05);
  EXPECT_DOUBLE_EQ(*h.value(x), 0.05);
  auto grid = SphereGrid::create(3, 8);
  EXPECT_LT(*h.clip_margin(*grid), 0.0);
  EXPECT_THROW(RhsFunction::constant(-1.0), ConfigError);
}

TEST(Residual, ExactSphereSolution) {
  auto grid = SphereGrid::create(3, 8);
  const RadialField u = RadialField::constant(grid, -std::log(1.0 / 12.0));
  const Residual r = residual(u, sphere_problem());
  EXPECT_LT(r.sup_norm(), 1e-12);
  EXPECT_TRUE(r.admissible());
}

TEST(Residual, RoundSphereFormula) {
  auto grid = SphereGrid::create(2, 8);
  ProblemSpec s;
  s.n = 2;
  s.p = 1;
  s.k = 2;
  s.l = 1;
  s.b = -2.5;
  s.q = 0.5;
  s.f = RhsFunction::constant(1.7);
  const double K = s.sphere_constant();
  for (double radius : {0.5, 1.0, 2.0}) {
    const Residual r = residual(RadialField::constant(grid, -std::log(radius)), s);
    const double expected = K - 1.7 * std::pow(radius, -s.exponent());
    EXPECT_NEAR(r.r.maxCoeff(), expected, 1e-12);
    EXPECT_NEAR(r.r.minCoeff(), expected, 1e-12);
  }
  const double exact = std::pow(1.7 / K, 1.0 / s.exponent());
  EXPECT_LT(residual(RadialField::constant(grid, -std::log(exact)), s).sup_norm(), 1e-12);
}

TEST(Residual, HomogeneousShiftInvariance) {
  auto grid = SphereGrid::create(2, 16);
  ProblemSpec s;
  s.n = 2;
  s.p = 2;
  s.k = 1;
  s.l = 0;
  s.b = -1.0;
  s.q = 0.0;
  s.f = RhsFunction::exp_harmonic({0.0, 0.1});
  RadialField u(grid, smooth_field(*grid, 0.1, 0.05, -0.05));
  const Residual r0 = residual(u, s);
  u.u.array() += 0.7;
  const Residual r1 = residual(u, s);
  EXPECT_LT((r0.r - r1.r).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Residual, GaugeHomogeneity) {
  auto grid = SphereGrid::create(2, 16);
  ProblemSpec s;
  s.n = 2;
  s.p = 1;
  s.k = 2;
  s.l = 0;
  s.b = -3.0;
  s.q = 0.0;
  s.f = RhsFunction::exp_harmonic({0.0, 0.2});
  CurvatureEquation eq(s, grid);
  RadialField u(grid, smooth_field(*grid, 0.1, 0.05, 0.0));
  const Residual r0 = eq.residual(u);
  const double shift = 0.3;
  u.u.array() += shift;
  const Residual r1 = eq.residual(u);
  const Eigen::VectorXd rhs0 = r0.F_vals - r0.r;
  const Eigen::VectorXd rhs1 = r1.F_vals - r1.r;
  EXPECT_LT((r0.F_vals - r1.F_vals).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((rhs1 - std::exp(s.exponent() * shift) * rhs0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Residual, ConeViolationNamesWorstNode) {
  auto grid = SphereGrid::create(2, 16);
  ProblemSpec s;
  s.n = 2;
  s.p = 1;
  s.k = 2;
  s.b = -3.0;
  s.f = RhsFunction::constant(1.0);
  // A deep dent makes the surface saddle-shaped somewhere.
  RadialField u(grid, smooth_field(*grid, 0.0, 0.0, 1.5));
  try {
    residual(u, s);
    FAIL();
  } catch (const ConeViolation& e) {
    EXPECT_GT(e.violations(), 0u);
    EXPECT_NE(e.node(), ConeViolation::npos);
    EXPECT_GE(e.level(), 1);
  }
}

TEST(Residual, MatchesCurvaturesFromFundamentalForms) {
  // F(kappa) - f rho^b <X,nu>^q from the embedding equals the gauge residual
  // divided by (rho v)^{k-l}.
  auto grid = SphereGrid::create(3, 8);
  for (int p = 1; p <= 2; ++p) {
    ProblemSpec s;
    s.n = 3;
    s.p = p;
    s.k = 2;
    s.l = 1;
    s.b = -2.0;
    s.q = 0.5;
    s.f = RhsFunction::exp_harmonic({0.1, 0.2, -0.1});
    const RadialField u(grid, smooth_field(*grid, 0.15, 0.1, -0.05));
    const Residual r = residual(u, s);
    const auto table = build_table(3, p);
    for (std::size_t i = 0; i < grid->size(); ++i) {
      const EmbeddedPoint e = embed_point(u, i);
      const Eigen::VectorXd kappa = principal_curvatures_from_forms(e.g, e.h);
      const Eigen::VectorXd L = lambda_of(kappa, *table);
      const double F = sigma(2, L) / sigma(1, L);
      const double rho = e.X.norm();
      const double support = e.X.dot(e.nu);
      const double classical = F - *s.f.value(grid->point(i)) * std::pow(rho, s.b) * std::pow(support, s.q);
      const GeometryPoint pt = geometry_point(u, i);
      const double scaled = r.r(static_cast<Eigen::Index>(i)) / (pt.rho * pt.v);
      EXPECT_NEAR(classical, scaled, 1e-9 * (1 + std::abs(classical)));
    }
  }
}

namespace {

double taylor_order(const ProblemSpec& s, JacobianMode mode) {
  auto grid = SphereGrid::create(s.n, s.n == 2 ? 16 : 8);
  CurvatureEquation eq(s, grid);
  const RadialField u(grid, 0.3 + smooth_field(*grid, 0.1, 0.08, -0.06).array());
  Eigen::VectorXd du = smooth_field(*grid, -0.3, 0.5, 0.4);
  const LinearizedOperator L = eq.linearize(u, mode);
  const Eigen::VectorXd Ldu = L.apply(du);
  const Residual r0 = eq.residual(u);
  double errs[2];
  int idx = 0;
  for (double t : {1e-4, 1e-5}) {
    RadialField ut = u;
    ut.u += t * du;
    const Eigen::VectorXd fd = (eq.residual(ut).r - r0.r) / t;
    errs[idx++] = (fd - Ldu).cwiseAbs().maxCoeff();
  }
  return std::log10(errs[0] / errs[1]);
}

}  // namespace

TEST(Linearize, TaylorConsistency) {
  ProblemSpec s;
  s.n = 2;
  s.p = 1;
  s.k = 2;
  s.l = 1;
  s.b = -2.0;
  s.q = 0.7;
  s.f = RhsFunction::exp_harmonic({0.0, 0.1, 0.2});
  EXPECT_GT(taylor_order(s, JacobianMode::exact), 0.95);
  s = sphere_problem();
  s.q = 0.4;
  s.b = -3.5;
  s.f = RhsFunction::exp_harmonic({0.0, 0.1, 0.0, 0.2});
  EXPECT_GT(taylor_order(s, JacobianMode::exact), 0.95);
}

TEST(Linearize, AssembledMatchesMatrixFree) {
  ProblemSpec s = sphere_problem();
  s.f = RhsFunction::exp_harmonic({0.0, 0.2});
  auto grid = SphereGrid::create(3, 8);
  CurvatureEquation eq(s, grid);
  const RadialField u(grid, 2.0 + smooth_field(*grid, 0.1, 0.05, 0.05).array());
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Eigen::VectorXd du(static_cast<Eigen::Index>(grid->size()));
  for (auto& x : du) x = g(rng);
  for (auto mode : {JacobianMode::exact, JacobianMode::frozen}) {
    const LinearizedOperator L = eq.linearize(u, mode);
    const Eigen::VectorXd a = L.apply(du);
    const Eigen::VectorXd b = L.assemble() * du;
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9 * a.cwiseAbs().maxCoeff());
  }
}

TEST(Linearize, ConstantPerturbationAtSphere) {
  auto grid = SphereGrid::create(3, 8);
  const ProblemSpec s = sphere_problem();
  const RadialField u = RadialField::constant(grid, std::log(12.0));
  const LinearizedOperator L = linearize(u, s);
  const Eigen::VectorXd out = L.apply(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(grid->size())));
  EXPECT_NEAR(out.maxCoeff(), -s.exponent() * 12.0, 1e-9);
  EXPECT_NEAR(out.minCoeff(), -s.exponent() * 12.0, 1e-9);
}

TEST(Linearize, SelfAdjointAtSphere) {
  auto grid = SphereGrid::create(2, 64);
  ProblemSpec s;
  s.n = 2;
  s.p = 1;
  s.k = 2;
  s.b = -3.0;
  s.f = RhsFunction::constant(2.0);
  const RadialField u = RadialField::constant(grid, std::log(2.0));
  const LinearizedOperator L = linearize(u, s);
  const Eigen::VectorXd d1 = smooth_field(*grid, 0.3, 0.5, 0.2);
  const Eigen::VectorXd d2 = smooth_field(*grid, -0.2, 0.1, 0.6);
  const Eigen::Map<const Eigen::VectorXd> w(grid->weights().data(), static_cast<Eigen::Index>(grid->size()));
  const double a = (w.array() * L.apply(d1).array() * d2.array()).sum();
  const double b = (w.array() * d1.array() * L.apply(d2).array()).sum();
  EXPECT_NEAR(a, b, 1e-8 * std::max(std::abs(a), 1.0));
}

TEST(Linearize, FrozenEqualsExactWithoutGradient) {
  auto grid = SphereGrid::create(2, 8);
  const ProblemSpec s = [] {
    ProblemSpec t;
    t.n = 2;
    t.p = 1;
    t.k = 2;
    t.b = -3.0;
    t.f = RhsFunction::constant(1.0);
    return t;
  }();
  const RadialField u = RadialField::constant(grid, 0.2);
  const Eigen::SparseMatrix<double> a = linearize(u, s, JacobianMode::exact).assemble();
  const Eigen::SparseMatrix<double> b = linearize(u, s, JacobianMode::frozen).assemble();
  EXPECT_LT((Eigen::MatrixXd(a) - Eigen::MatrixXd(b)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AuditBounds, ConstantRhsCollapsesInterval) {
  auto grid = SphereGrid::create(3, 8);
  const ProblemSpec s = sphere_problem();
  const BoundReport rep = audit_bounds(RadialField::constant(grid, std::log(12.0)), s);
  ASSERT_TRUE(rep.c0_applicable);
  EXPECT_NEAR(rep.c0_lower, 1.0 / 12.0, 1e-14);
  EXPECT_NEAR(rep.c0_upper, 1.0 / 12.0, 1e-14);
  EXPECT_NEAR(rep.c0_slack, 0.0, 1e-8);
  EXPECT_TRUE(rep.pass());
  EXPECT_NEAR(rep.max_abs_kappa, 12.0, 1e-10);
}

TEST(AuditBounds, HomogeneousEpsilonVersion) {
  auto grid = SphereGrid::create(3, 8);
  ProblemSpec s = sphere_problem();
  s.b = -2.0;
  s.epsilon = 0.1;
  // rho^eps = f / 12 for constant f.
  const double rho = std::pow(1.0 / 12.0, 1.0 / 0.1);
  const BoundReport rep = audit_bounds(RadialField::constant(grid, -std::log(rho)), s);
  ASSERT_TRUE(rep.c0_applicable);
  EXPECT_NEAR(std::pow(rep.c0_lower, 0.1), 1.0 / 12.0, 1e-12);
  EXPECT_TRUE(rep.c0_ok);
  EXPECT_TRUE(rep.gradient_hypothesis_applicable);
  EXPECT_TRUE(rep.gradient_hypothesis_ok);
}

TEST(AuditBounds, DetectsFieldOutsideInterval) {
  auto grid = SphereGrid::create(3, 8);
  const BoundReport rep = audit_bounds(RadialField::constant(grid, 0.0), sphere_problem());
  EXPECT_FALSE(rep.c0_ok);
  EXPECT_FALSE(rep.pass());
}

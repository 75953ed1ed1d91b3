#include "pkcurv/errors.hpp"
#include "pkcurv/solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace pkcurv;

namespace {

ProblemSpec sphere_problem() {
  ProblemSpec s;
  s.n = 3;
  s.p = 2;
  s.k = 2;
  s.l = 0;
  s.b = -3.0;
  s.f = RhsFunction::constant(1.0);
  return s;
}

// n = 2 Gauss-curvature-like problem with a tilted right-hand side.
ProblemSpec surface_problem() {
  ProblemSpec s;
  s.n = 2;
  s.p = 1;
  s.k = 2;
  s.l = 1;
  s.b = -2.0;
  s.q = 0.5;
  s.f = RhsFunction::exp_harmonic({0.0, 0.2, 0.1, 0.0});
  return s;
}

double spread(const RadialField& u) { return u.u.maxCoeff() - u.u.minCoeff(); }

SolverConfig quiet() {
  SolverConfig c;
  c.newton_tol = 1e-10;
  return c;
}

}  // namespace

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.t_steps.size(), 11u);
  EXPECT_DOUBLE_EQ(c.t_steps.front(), 0.0);
  EXPECT_DOUBLE_EQ(c.t_steps.back(), 1.0);
  c.damping = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SolverConfig{};
  c.t_steps = {0.0, 0.5, 0.4, 1.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = SolverConfig{};
  c.eps_schedule = {0.1, 0.2};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Newton, ExactSphereIsAFixedPoint) {
  const auto grid = SphereGrid::create(3, 8);
  const RadialField u0 = RadialField::constant(grid, std::log(12.0));
  const NewtonResult r = newton_solve(u0, sphere_problem(), quiet());
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 1);
  for (const auto& s : r.steps) EXPECT_EQ(s.step_length, 1.0);
}

TEST(Newton, QuadraticFromScaledRadius) {
  const auto grid = SphereGrid::create(3, 8);
  const RadialField u0 = RadialField::constant(grid, std::log(12.0) - std::log(1.2));
  SolverConfig c = quiet();
  c.jacobian = JacobianPolicy::exact;
  const NewtonResult r = newton_solve(u0, sphere_problem(), c);
  ASSERT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 6);
  std::vector<double> norms;
  for (const auto& s : r.steps) norms.push_back(s.residual);
  norms.push_back(r.residual);
  for (std::size_t m = 0; m + 1 < norms.size(); ++m) {
    if (norms[m] < 1e-6) break;  // below this rounding dominates the ratio
    EXPECT_LT(norms[m + 1] / (norms[m] * norms[m]), 1.0) << "step " << m;
  }
  EXPECT_NEAR(std::exp(-r.u.u.mean()), 1.0 / 12.0, 1e-12);
}

TEST(Newton, RejectsInadmissibleStart) {
  const auto grid = SphereGrid::create(2, 16);
  ProblemSpec s = surface_problem();
  Eigen::VectorXd u(static_cast<Eigen::Index>(grid->size()));
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const Eigen::VectorXd x = grid->point(i);
    u(static_cast<Eigen::Index>(i)) = -3.0 * x(0) * x(0);  // saddle-shaped, outside Gamma_2
  }
  EXPECT_THROW(newton_solve(RadialField(grid, u), s, quiet()), ConeViolation);
}

TEST(Newton, ResidualDecreasesMonotonically) {
  const auto grid = SphereGrid::create(2, 16);
  const RadialField u0 = RadialField::constant(grid, 0.0);
  const NewtonResult r = newton_solve(u0, surface_problem(), quiet());
  ASSERT_TRUE(r.converged) << r.failure;
  for (std::size_t m = 1; m < r.steps.size(); ++m) EXPECT_LT(r.steps[m].residual, r.steps[m - 1].residual);
  EXPECT_GT(r.min_margin, 0.0);
}

TEST(Newton, DistinctStartsAgree) {
  const auto grid = SphereGrid::create(2, 24);
  const ProblemSpec s = surface_problem();
  const NewtonResult a = newton_solve(RadialField::constant(grid, -0.3), s, quiet());
  const NewtonResult b = newton_solve(RadialField::constant(grid, 0.4), s, quiet());
  ASSERT_TRUE(a.converged) << a.failure;
  ASSERT_TRUE(b.converged) << b.failure;
  EXPECT_LT((a.u.u - b.u.u).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LinearSolver, DirectAndIterativeAgree) {
  const auto grid = SphereGrid::create(3, 8);
  ProblemSpec s = sphere_problem();
  s.f = RhsFunction::exp_harmonic({0.0, 0.0, 0.2, 0.0, 0.0});
  const CurvatureEquation eq(s, grid);
  Eigen::VectorXd u(static_cast<Eigen::Index>(grid->size()));
  for (std::size_t i = 0; i < grid->size(); ++i) u(static_cast<Eigen::Index>(i)) = 2.4 + 0.05 * grid->point(i)(1);
  const RadialField field(grid, u);
  const LinearizedOperator L = eq.linearize(field, JacobianMode::exact);
  const Eigen::VectorXd rhs = eq.evaluate(field).r;

  SolverConfig c;
  c.linear_solver = LinearSolverKind::direct;
  Eigen::VectorXd xd, xi;
  ASSERT_TRUE(LinearSolver(c).solve(L, rhs, xd).ok);
  c.linear_solver = LinearSolverKind::iterative;
  const auto st = LinearSolver(c).solve(L, rhs, xi);
  ASSERT_TRUE(st.ok);
  EXPECT_GT(st.iterations, 0);
  EXPECT_LT((xd - xi).norm() / xd.norm(), 1e-6);
  EXPECT_LT((L.apply(xi) - rhs).norm() / rhs.norm(), 1e-6);
}

TEST(Continuation, ConstantRightHandSideGivesRoundSphere) {
  const auto grid = SphereGrid::create(3, 8);
  const SolveReport rep = continuation_solve(sphere_problem(), grid, quiet());
  ASSERT_TRUE(rep.converged) << rep.message;
  const double r = std::exp(-rep.u_final.u.mean());
  EXPECT_NEAR(r, 1.0 / 12.0, 1e-8 / 12.0);
  EXPECT_LT(spread(rep.u_final), 1e-8);
  EXPECT_EQ(rep.trace.size(), 11u);
  for (const auto& row : rep.trace) {
    EXPECT_TRUE(row.converged);
    EXPECT_LT(row.max_rho / row.min_rho - 1.0, 1e-8);  // constant in x at every t
  }
  EXPECT_TRUE(rep.audits.pass());
  EXPECT_TRUE(rep.certificate.positive_definite);
}

TEST(Continuation, BoundsContainSolution) {
  const auto grid = SphereGrid::create(2, 24);
  const SolveReport rep = continuation_solve(surface_problem(), grid, quiet());
  ASSERT_TRUE(rep.converged) << rep.message;
  ASSERT_TRUE(rep.audits.c0_applicable);
  EXPECT_GT(rep.audits.c0_slack, 0.0);
  EXPECT_GT(spread(rep.u_final), 1e-3);
}

TEST(Continuation, DirectNewtonFromBoundMidpointAgrees) {
  const auto grid = SphereGrid::create(2, 24);
  const ProblemSpec s = surface_problem();
  const SolveReport rep = continuation_solve(s, grid, quiet());
  ASSERT_TRUE(rep.converged);
  const double mid = 0.5 * (rep.audits.c0_lower + rep.audits.c0_upper);
  const NewtonResult direct = newton_solve(RadialField::constant(grid, -std::log(mid)), s, quiet());
  ASSERT_TRUE(direct.converged) << direct.failure;
  EXPECT_LT((direct.u.u - rep.u_final.u).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Continuation, DilationLaw) {
  const auto grid = SphereGrid::create(2, 16);
  ProblemSpec s = surface_problem();
  const SolveReport a = continuation_solve(s, grid, quiet());
  s.f = s.f.scaled(2.0);
  const SolveReport b = continuation_solve(s, grid, quiet());
  ASSERT_TRUE(a.converged && b.converged);
  const double shift = std::log(2.0) / s.exponent();
  EXPECT_LT((b.u_final.u.array() + shift - a.u_final.u.array()).abs().maxCoeff(), 1e-7);
}

TEST(Continuation, RejectsHomogeneousProblem) {
  ProblemSpec s = sphere_problem();
  s.b = -2.0;
  EXPECT_THROW(continuation_solve(s, SphereGrid::create(3, 8), quiet()), ConfigError);
}

TEST(Homogeneous, ConstantEigenvalue) {
  ProblemSpec s = sphere_problem();
  s.b = -2.0;
  const SolveReport rep = homogeneous_solve(s, SphereGrid::create(3, 8), quiet());
  ASSERT_TRUE(rep.converged) << rep.message;
  ASSERT_TRUE(rep.gamma.has_value());
  EXPECT_NEAR(*rep.gamma, 12.0, 12.0 * 1e-10);
  EXPECT_TRUE(rep.gamma_cauchy);
  EXPECT_LT((rep.u_final.u.array().exp().inverse() - 1.0).abs().maxCoeff(), 1e-10);
  EXPECT_EQ(rep.u_final.u.maxCoeff(), 0.0);  // min rho-bar is exactly 1
  EXPECT_EQ(rep.gamma_samples.size(), 4u);
}

TEST(Homogeneous, GammaIndependentOfSchedule) {
  ProblemSpec s = surface_problem();
  s.b = -1.5;  // -b-q-k+l = 0
  const auto grid = SphereGrid::create(2, 24);
  SolverConfig c1 = quiet(), c2 = quiet();
  c1.eps_schedule = {0.2, 0.1, 0.05};
  c2.eps_schedule = {0.16, 0.08, 0.04};
  const SolveReport a = homogeneous_solve(s, grid, c1);
  const SolveReport b = homogeneous_solve(s, grid, c2);
  ASSERT_TRUE(a.converged && b.converged);
  EXPECT_NEAR(*a.gamma / *b.gamma, 1.0, 1e-3);
  ASSERT_TRUE(a.gamma_newton && b.gamma_newton);
  EXPECT_NEAR(*a.gamma_newton / *b.gamma_newton, 1.0, 1e-9);
  // extrapolation error is O(eps_min^3)
  EXPECT_NEAR(*a.gamma / *a.gamma_newton, 1.0, 1e-3);
  EXPECT_LT(a.residual, 1e-8);
}

TEST(Homogeneous, ResidualInvariantUnderDilation) {
  ProblemSpec s = surface_problem();
  s.b = -1.5;
  const SolveReport rep = homogeneous_solve(s, SphereGrid::create(2, 16), quiet());
  ASSERT_TRUE(rep.converged);
  const double g = *rep.gamma_newton;
  const Residual a = homogeneous_residual(rep.u_final, s, g);
  const RadialField doubled(rep.u_final.grid, (rep.u_final.u.array() - std::log(2.0)).matrix());
  const Residual b = homogeneous_residual(doubled, s, g);
  EXPECT_LT((a.r - b.r).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Certificate, RoundSphere) {
  const auto grid = SphereGrid::create(3, 8);
  const double r = 0.5;
  const CertificateReport c = convexity_certificate(RadialField::constant(grid, -std::log(r)), sphere_problem());
  EXPECT_NEAR(c.min_h_eigenvalue, 1.0 / r, 1e-12);
  EXPECT_EQ(c.rank_histogram.back(), grid->size());
  EXPECT_TRUE(c.positive_definite);
  EXPECT_TRUE(c.q_nonnegative);
  EXPECT_TRUE(c.concavity_checked);
  // r^{b/(k-l)} with b/(k-l) = -3/2 is convex in the radial direction.
  EXPECT_FALSE(c.concavity_ok);
  EXPECT_GT(c.concavity_max_eigenvalue, 1.0);
  EXPECT_TRUE(c.consistent());
}

TEST(Reports, JsonAndCsv) {
  const auto grid = SphereGrid::create(3, 8);
  const SolveReport rep = continuation_solve(sphere_problem(), grid, quiet());
  const nlohmann::json j = rep.to_json();
  EXPECT_TRUE(j["converged"].get<bool>());
  EXPECT_EQ(j["grid"]["nodes"].get<std::size_t>(), grid->size());
  EXPECT_TRUE(j.contains("audits"));
  EXPECT_TRUE(j.contains("certificate"));

  const auto dir = std::filesystem::temp_directory_path();
  rep.write_solution_csv(dir / "pkcurv_solution.csv");
  rep.write_trace_csv(dir / "pkcurv_trace.csv");
  std::ifstream sol(dir / "pkcurv_solution.csv");
  std::string header;
  std::getline(sol, header);
  EXPECT_EQ(header, "node,theta1,theta2,theta3,x0,x1,x2,x3,u,rho,kappa1,kappa2,kappa3,cone_margin");
  std::size_t rows = 0;
  for (std::string line; std::getline(sol, line);) ++rows;
  EXPECT_EQ(rows, grid->size());
  std::ifstream tr(dir / "pkcurv_trace.csv");
  std::getline(tr, header);
  EXPECT_EQ(header.rfind("stage,parameter,", 0), 0u);
}

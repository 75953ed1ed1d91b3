#pragma once

// Damped Newton, the continuity path in t for -b-q-k+l > 0 and the
// epsilon -> 0 regularization path that extracts the eigenvalue gamma when
// -b-q-k+l = 0.

#include "pkcurv/pde.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pkcurv {

enum class LinearSolverKind {
  automatic,  // direct up to direct_limit unknowns, iterative above
  direct,     // sparse LU of the assembled Jacobian
  iterative,  // GMRES with a low-order Cholesky preconditioner
};

enum class JacobianPolicy { automatic, exact, frozen };

struct SolverConfig {
  double newton_tol = 1e-10;       // residual sup-norm
  int max_newton = 40;
  double damping = 0.5;            // backtracking ratio
  double armijo = 1e-4;
  double min_step = 1.0 / 4096.0;  // smallest backtracking step
  std::vector<double> t_steps = uniform_schedule(11);
  double min_t_step = 1e-6;
  std::vector<double> eps_schedule{0.2, 0.1, 0.05, 0.025};
  LinearSolverKind linear_solver = LinearSolverKind::automatic;
  double linear_tol = 1e-8;
  int gmres_restart = 60;
  int max_linear_iterations = 300;
  std::size_t direct_limit = 512;
  JacobianPolicy jacobian = JacobianPolicy::automatic;
  double frozen_switch = 0.1;      // relative residual above which automatic uses frozen
  bool verbose = false;

  /// count points 0, 1/(count-1), ..., 1.
  static std::vector<double> uniform_schedule(int count);
  void validate() const;
};

/// Reusable linear solver state for a fixed grid.
class LinearSolver {
 public:
  explicit LinearSolver(const SolverConfig& config);
  ~LinearSolver();
  LinearSolver(LinearSolver&&) noexcept;
  LinearSolver& operator=(LinearSolver&&) noexcept;

  struct Stats {
    bool ok = false;
    int iterations = 0;           // 0 for direct solves
    double relative_residual = 0.0;
    bool refactored = false;
  };

  /// Iterative solves stop at relative residual max(forcing, linear_tol).
  Stats solve(const LinearizedOperator& L, const Eigen::VectorXd& rhs, Eigen::VectorXd& x,
              double forcing = 0.0);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct NewtonStep {
  double residual = 0.0;        // before the step
  double step_length = 0.0;
  int linear_iterations = 0;
  bool exact_jacobian = true;
};

struct NewtonResult {
  RadialField u;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;        // final sup-norm
  double min_margin = 0.0;      // final min cone margin
  std::vector<NewtonStep> steps;
  std::string failure;          // empty when converged
  int linear_iterations = 0;
  /// Converged with the residual above newton_tol but at the estimated
  /// rounding level of the discretization, where no step can reduce it.
  bool at_roundoff_floor = false;
  double roundoff_floor = 0.0;
};

/// Newton's method from an admissible start. Throws ConeViolation when u0
/// is not admissible; other failures are reported in the result.
NewtonResult newton_solve(const CurvatureEquation& eq, const RadialField& u0,
                          const SolverConfig& config, LinearSolver* linear = nullptr);
NewtonResult newton_solve(const RadialField& u0, const ProblemSpec& spec,
                          const SolverConfig& config);

struct CertificateReport {
  /// Smallest eigenvalue of h relative to g (principal curvature).
  double min_h_eigenvalue = 0.0;
  std::size_t argmin_node = 0;
  double max_abs_kappa = 0.0;
  double rank_tolerance = 0.0;   // 1e-8 * max |kappa|
  std::vector<std::size_t> rank_histogram;  // nodes by number of kappa above tolerance
  bool positive_definite = false;
  bool q_nonnegative = false;
  bool concavity_checked = false;
  double concavity_max_eigenvalue = 0.0;  // scaled by |phi| / r^2
  bool concavity_ok = false;
  bool hypotheses_hold() const noexcept { return q_nonnegative && concavity_checked && concavity_ok; }
  /// Hypotheses imply a positive definite second fundamental form.
  bool consistent() const noexcept { return !hypotheses_hold() || positive_definite; }
  nlohmann::json to_json() const;
};

CertificateReport convexity_certificate(const RadialField& u, const ProblemSpec& spec);

struct TraceRow {
  std::string stage;        // "t", "eps" or "newton"
  double parameter = 0.0;
  int newton_iterations = 0;
  int linear_iterations = 0;
  double residual = 0.0;
  double min_rho = 0.0;
  double max_rho = 0.0;
  double cone_margin = 0.0;
  double min_h_eigenvalue = 0.0;
  bool converged = false;
};

struct GammaSample {
  double epsilon = 0.0;
  double gamma = 0.0;
  double min_rho = 0.0;
  bool converged = false;
};

struct SolveReport {
  ProblemSpec spec;
  RadialField u_final;
  bool converged = false;
  std::string message;
  double residual = 0.0;
  double min_margin = 0.0;
  std::optional<double> gamma;         // extrapolated from the epsilon samples
  std::optional<double> gamma_newton;  // from Newton on the limit equation
  std::vector<GammaSample> gamma_samples;
  bool gamma_cauchy = true;
  double gamma_spread = 0.0;
  std::vector<TraceRow> trace;
  BoundReport audits;
  CertificateReport certificate;
  std::vector<std::string> warnings;
  double runtime_seconds = 0.0;

  nlohmann::json to_json() const;
  void write_solution_csv(const std::filesystem::path& path) const;
  void write_trace_csv(const std::filesystem::path& path) const;
};

/// Continuity path f_t = [t f^{1/(k-l)} + (1-t) K^{1/(k-l)}]^{k-l},
/// K = (C_N^k / C_N^l) p^{k-l}, from rho = 1 at t = 0. Requires a positive
/// gauge exponent (epsilon included).
SolveReport continuation_solve(const ProblemSpec& spec, std::shared_ptr<const SphereGrid> grid,
                               const SolverConfig& config);

/// Regularized solves over the epsilon schedule; returns rho normalized to
/// min 1 and gamma extrapolated to epsilon = 0. The shape is then refined by
/// Newton on the limit equation with gamma as an extra unknown, which also
/// gives gamma_newton.
SolveReport homogeneous_solve(const ProblemSpec& spec, std::shared_ptr<const SphereGrid> grid,
                              const SolverConfig& config);

/// F(Lambda(a)) - gamma f v^{k-l-q} for a homogeneous problem.
Residual homogeneous_residual(const RadialField& u, const ProblemSpec& spec, double gamma);

/// Trace row data for a field.
TraceRow describe(const CurvatureEquation& eq, const RadialField& u, const Residual& res);

}  // namespace pkcurv

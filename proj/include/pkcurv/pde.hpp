#pragma once

// The curvature equation in the log-radial gauge u = -log rho:
//
//   F(Lambda(a)) = f(x) e^{c u} v^{k-l-q},   c = -b-q-k+l+epsilon,
//
// with a the shape matrix of u and v = sqrt(1 + |grad u|^2).

#include "pkcurv/exterior.hpp"
#include "pkcurv/geometry.hpp"

#include <Eigen/Sparse>
#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pkcurv {

/// Positive right-hand side f on S^n.
class RhsFunction {
 public:
  enum class Kind { constant, harmonic, exp_harmonic, table };

  RhsFunction() = default;
  static RhsFunction constant(double c);
  /// max(floor, c0 + sum_i c_{i+1} x_i), x the unit vector in R^{n+1}.
  static RhsFunction harmonic(std::vector<double> coeffs, double floor);
  /// exp(c0 + sum_i c_{i+1} x_i).
  static RhsFunction exp_harmonic(std::vector<double> coeffs);
  /// Per-node values in grid order.
  static RhsFunction table(std::vector<double> values, std::string source = {});

  Kind kind() const noexcept { return kind_; }
  bool is_constant() const noexcept { return kind_ == Kind::constant; }
  /// Coefficients (harmonic kinds), the constant, or the table values.
  const std::vector<double>& coefficients() const noexcept { return coeffs_; }
  double floor() const noexcept { return floor_; }

  /// Value at a unit vector; nullopt for tables.
  std::optional<double> value(const Eigen::VectorXd& x) const;
  /// Values at every node; throws ConfigError on size mismatch or f <= 0.
  Eigen::VectorXd sample(const SphereGrid& grid) const;
  /// Smallest unclipped value minus the floor over the grid (harmonic only).
  std::optional<double> clip_margin(const SphereGrid& grid) const;

  /// s * f.
  RhsFunction scaled(double s) const;

  nlohmann::json to_json() const;
  /// Reads {"type": ...}; table paths resolve against `base`.
  static RhsFunction from_json(const nlohmann::json& j, const std::filesystem::path& base = {});

 private:
  Kind kind_ = Kind::constant;
  std::vector<double> coeffs_{1.0};
  double floor_ = 0.0;
  std::string source_;  // table file, if any
};

struct ProblemSpec {
  int n = 2;
  int p = 1;
  int k = 1;
  int l = 0;
  double b = 0.0;
  double q = 0.0;
  double epsilon = 0.0;
  RhsFunction f;

  enum class Regime { nonhomogeneous, homogeneous };

  int N() const;
  /// -b-q-k+l.
  double exponent() const noexcept { return -b - q - k + l; }
  /// Exponent of e^{u} in the gauge equation, epsilon included.
  double gauge_exponent() const noexcept { return exponent() + epsilon; }
  Regime regime() const;
  /// (C_N^k / C_N^l) p^{k-l}, the value of F on the unit sphere.
  double sphere_constant() const;

  /// Throws ConfigError on inadmissible integers or a negative exponent.
  void validate() const;
  /// Soft warnings about the range where a priori estimates are known.
  std::vector<std::string> warnings() const;

  nlohmann::json to_json() const;
  static ProblemSpec from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
  static ProblemSpec load(const std::filesystem::path& path);
};

/// Per-node residual and admissibility data.
struct Residual {
  Eigen::VectorXd r;
  Eigen::VectorXd F_vals;
  Eigen::VectorXd cone_margin;   // min_{j<=k} sigma_j(Lambda)
  std::vector<char> cone_ok;
  std::size_t violations = 0;
  std::size_t worst_node = 0;    // smallest cone margin
  int worst_level = 0;           // first failing sigma_j at worst_node (0 if admissible)

  bool admissible() const noexcept { return violations == 0; }
  double sup_norm() const { return r.size() ? r.cwiseAbs().maxCoeff() : 0.0; }
  double min_margin() const { return cone_margin.size() ? cone_margin.minCoeff() : 0.0; }
};

enum class JacobianMode {
  exact,   // full Frechet derivative
  frozen,  // drops the dependence of a_ij on grad u through gbar and hbar
};

/// Discrete Frechet derivative of the residual at a fixed field. Rows are
/// stored as coefficients on the coordinate partials plus a diagonal term.
class LinearizedOperator {
 public:
  std::size_t size() const noexcept { return diag_.size(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& du) const;
  Eigen::SparseMatrix<double> assemble() const;
  /// Same coefficients on the compact second-order stencil (preconditioner).
  Eigen::SparseMatrix<double> assemble_low_order() const;
  const Eigen::VectorXd& diagonal_term() const noexcept { return diag_; }
  const std::shared_ptr<const SphereGrid>& grid() const noexcept { return grid_; }

 private:
  friend class CurvatureEquation;
  Eigen::SparseMatrix<double> assemble_with(const FrameDifferences& d) const;

  std::shared_ptr<const SphereGrid> grid_;
  int stride_ = 0;
  std::vector<double> coeff_;  // stride_ partial coefficients per node
  Eigen::VectorXd diag_;
};

/// A ProblemSpec bound to a grid, with f sampled at the nodes.
class CurvatureEquation {
 public:
  CurvatureEquation(ProblemSpec spec, std::shared_ptr<const SphereGrid> grid);

  const ProblemSpec& spec() const noexcept { return spec_; }
  const std::shared_ptr<const SphereGrid>& grid() const noexcept { return grid_; }
  const QuotientOperator& op() const noexcept { return op_; }
  const Eigen::VectorXd& rhs_values() const noexcept { return f_; }
  /// Replaces the sampled f (continuation paths).
  void set_rhs_values(Eigen::VectorXd f);

  /// Never throws on cone violations; see Residual::admissible.
  Residual evaluate(const RadialField& u) const;
  /// Throws ConeViolation naming the worst node.
  Residual residual(const RadialField& u) const;
  LinearizedOperator linearize(const RadialField& u, JacobianMode mode) const;

 private:
  ProblemSpec spec_;
  std::shared_ptr<const SphereGrid> grid_;
  QuotientOperator op_;
  Eigen::VectorXd f_;
};

Residual residual(const RadialField& u, const ProblemSpec& spec);
LinearizedOperator linearize(const RadialField& u, const ProblemSpec& spec,
                             JacobianMode mode = JacobianMode::exact);

struct BoundReport {
  double min_rho = 0.0;
  double max_rho = 0.0;
  bool c0_applicable = false;
  double c0_lower = 0.0;
  double c0_upper = 0.0;
  /// min(min_rho - lower, upper - max_rho) / upper; >= 0 iff contained.
  double c0_slack = 0.0;
  bool c0_ok = true;
  double max_grad_log_rho = 0.0;
  double max_abs_kappa = 0.0;
  bool finite = true;
  bool gradient_hypothesis_applicable = false;
  double gradient_ratio = 0.0;       // max |grad f| / f
  double gradient_threshold = 0.0;   // 2 (k-l) sqrt((p-1)/p)
  bool gradient_hypothesis_ok = true;

  /// Hypothesis flags are informational and do not enter pass().
  bool pass() const noexcept { return finite && c0_ok; }
  nlohmann::json to_json() const;
};

/// C^0 interval, gradient and curvature maxima, and the gradient smallness
/// hypothesis for homogeneous q = 0 problems.
BoundReport audit_bounds(const RadialField& u, const ProblemSpec& spec);

/// |grad log f| at every node by grid differences.
Eigen::VectorXd log_gradient_norm(const SphereGrid& grid, const Eigen::VectorXd& f);

}  // namespace pkcurv

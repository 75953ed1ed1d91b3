#pragma once

// p-fold multi-indices, the derivation matrix W of a symmetric matrix on the
// p-th exterior power, the Lambda map and the operator F = sigma_k/sigma_l(Lambda).

#include "pkcurv/symfun.hpp"

#include <Eigen/Dense>

#include <memory>
#include <vector>

namespace pkcurv {

/// Symmetric n x n matrix; only the upper triangle is stored.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(int n);

  /// Reads the upper triangle of `m`.
  static SymMatrix from_dense(const Eigen::MatrixXd& m);
  static SymMatrix identity(int n);

  int dim() const noexcept { return n_; }
  double operator()(int i, int j) const noexcept { return data_[offset(i, j)]; }
  double& operator()(int i, int j) noexcept { return data_[offset(i, j)]; }
  Eigen::MatrixXd dense() const;

 private:
  std::size_t offset(int i, int j) const noexcept {
    if (i > j) std::swap(i, j);
    return static_cast<std::size_t>(i) * n_ - static_cast<std::size_t>(i) * (i - 1) / 2 + (j - i);
  }

  int n_ = 0;
  std::vector<double> data_;
};

/// Ordered p-subsets of {0..n-1} with complements and the (I, J) pairs that
/// differ in exactly one element.
class MultiIndexTable {
 public:
  struct Adjacency {
    int I;     // row multi-index (position in the table)
    int J;     // column multi-index
    int i;     // element of I not in J
    int j;     // element of J not in I
    int sign;  // sigma(i, I - i) * sigma(j, J - j)
  };

  /// Throws DomainError unless 1 <= p <= n <= 12.
  MultiIndexTable(int n, int p);

  int n() const noexcept { return n_; }
  int p() const noexcept { return p_; }
  int size() const noexcept { return static_cast<int>(indices_.size()); }
  const std::vector<int>& index(int I) const { return indices_[I]; }
  const std::vector<int>& complement(int I) const { return complements_[I]; }
  const std::vector<Adjacency>& adjacency() const noexcept { return adjacency_; }
  /// Multi-indices containing element i.
  const std::vector<int>& containing(int i) const { return containing_[i]; }
  /// Position of a sorted multi-index, or -1.
  int find(const std::vector<int>& multi_index) const;

  /// Sign of the permutation sorting (i, rest) where rest is increasing and
  /// does not contain i.
  static int reorder_sign(int i, const std::vector<int>& rest);

 private:
  int n_;
  int p_;
  std::vector<std::vector<int>> indices_;
  std::vector<std::vector<int>> complements_;
  std::vector<Adjacency> adjacency_;
  std::vector<std::vector<int>> containing_;
};

/// Matrix of the derivation induced by A on the p-th exterior power, in the
/// table's basis order.
struct DerivationMatrix {
  Eigen::MatrixXd entries;
  std::shared_ptr<const MultiIndexTable> table;
};

/// Builds the (shared, immutable) multi-index table.
std::shared_ptr<const MultiIndexTable> build_table(int n, int p);

DerivationMatrix derivation_matrix(const SymMatrix& a,
                                   const std::shared_ptr<const MultiIndexTable>& table);

/// Lambda_I(kappa) = sum_{i in I} kappa_i, in table order.
Eigen::VectorXd lambda_of(const Eigen::VectorXd& kappa, const MultiIndexTable& table);

/// sigma_j(Lambda(kappa)) > 0 for j <= k.
ConeTest in_pk_cone(const Eigen::VectorXd& kappa, int k, const MultiIndexTable& table);

/// Per-point package of the curvature operator.
struct CurvaturePoint {
  SymMatrix a;
  Eigen::VectorXd kappa;    // eigenvalues of a, ascending
  Eigen::MatrixXd basis;    // orthonormal eigenvectors (columns)
  Eigen::VectorXd Lambda;   // I-sums of kappa
  double F = 0.0;           // sigma_k / sigma_l (Lambda), valid when cone_ok
  SymMatrix F_grad;         // dF / da_ij, valid when cone_ok
  Eigen::VectorXd F_kappa;  // dF / dkappa_i, valid when cone_ok
  double cone_margin = 0.0; // min_{j<=k} sigma_j(Lambda)
  int first_failure = 0;
  bool cone_ok = false;
};

/// F = sigma_k/sigma_l (Lambda(W(a))) for a fixed (table, k, l).
class QuotientOperator {
 public:
  QuotientOperator(std::shared_ptr<const MultiIndexTable> table, int k, int l);

  int k() const noexcept { return k_; }
  int l() const noexcept { return l_; }
  const MultiIndexTable& table() const noexcept { return *table_; }
  const std::shared_ptr<const MultiIndexTable>& table_ptr() const noexcept { return table_; }

  /// Evaluates the operator; never throws on a cone violation (see cone_ok).
  CurvaturePoint evaluate(const Eigen::MatrixXd& a) const;

  /// Derivatives in kappa of f(kappa) = F(Lambda(kappa)).
  ScalarDerivatives kappa_derivatives(const Eigen::VectorXd& kappa, bool with_hessian) const;

  /// Second directional derivative d^2/dt^2 F(a + t xi) at t = 0.
  /// Throws ConeViolation outside the cone.
  double hessian_form(const Eigen::MatrixXd& a, const Eigen::MatrixXd& xi) const;

 private:
  std::shared_ptr<const MultiIndexTable> table_;
  int k_;
  int l_;
};

/// Throws ConeViolation when Lambda(kappa(a)) leaves Gamma_k.
CurvaturePoint F_and_gradient(const SymMatrix& a, int p, int k, int l,
                              const std::shared_ptr<const MultiIndexTable>& table);

double F_hessian_quadratic_form(const SymMatrix& a, const SymMatrix& xi, int p, int k, int l,
                                const std::shared_ptr<const MultiIndexTable>& table);

/// Second directional derivative of a symmetric spectral function
/// g(A) = phi(eigenvalues(A)) along the symmetric direction xi, given the
/// eigen-decomposition of A and the gradient/Hessian of phi. Gaps below
/// `degenerate_gap` use the limit phi_ii - phi_ij.
double spectral_quadratic_form(const Eigen::VectorXd& kappa, const Eigen::MatrixXd& basis,
                               const Eigen::VectorXd& grad, const Eigen::MatrixXd& hess,
                               const Eigen::MatrixXd& xi, double degenerate_gap = 1e-9);

/// Pulls derivatives in Lambda (length N) back to derivatives in kappa (length n).
ScalarDerivatives pull_back_to_kappa(const ScalarDerivatives& in_lambda,
                                     const MultiIndexTable& table);

}  // namespace pkcurv

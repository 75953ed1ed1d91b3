#pragma once

// Elementary symmetric functions sigma_k on R^m, their minors, Hessian
// quotients and Garding cone tests.

#include <Eigen/Dense>

#include <span>

namespace pkcurv {

/// Result of a Garding cone membership test.
struct ConeTest {
  bool inside = false;
  /// Smallest j with sigma_j <= 0, or 0 when inside.
  int first_failure = 0;

  explicit operator bool() const noexcept { return inside; }
};

/// sigma_0 .. sigma_m of `lam` by the product recurrence prod(1 + t lam_i).
Eigen::VectorXd all_sigmas(const Eigen::VectorXd& lam);

/// sigma_k(lam); sigma_0 = 1. Throws DomainError unless 0 <= k <= m.
double sigma(int k, const Eigen::VectorXd& lam);

/// sigma_k of lam with the entries in `excluded` (at most two distinct,
/// zero-based indices) removed. Returns 0 when k exceeds the remaining length
/// and for negative k.
double sigma_minor(int k, const Eigen::VectorXd& lam, std::span<const int> excluded);

/// Strict test sigma_j(lam) > 0 for 1 <= j <= k.
ConeTest in_gamma_cone(int k, const Eigen::VectorXd& lam);

/// Smallest of sigma_1..sigma_k (positive iff lam is in Gamma_k).
double cone_margin(int k, const Eigen::VectorXd& lam);

/// (sigma_k / sigma_l)^(1/(k-l)) for lam in Gamma_k, 0 <= l < k.
/// Throws ConeViolation when lam is outside Gamma_k.
double quotient_root(int k, int l, const Eigen::VectorXd& lam);

/// d sigma_k / d lam_i = sigma_{k-1}(lam | i).
Eigen::VectorXd sigma_gradient(int k, const Eigen::VectorXd& lam);

/// Value, gradient and (optionally) Hessian of a scalar function of lam.
struct ScalarDerivatives {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;  // empty unless requested
};

/// Derivatives of sigma_k / sigma_l at lam. No cone check; sigma_l must be
/// nonzero.
ScalarDerivatives quotient_derivatives(int k, int l, const Eigen::VectorXd& lam,
                                       bool with_hessian);

/// Derivatives of scale * g^alpha given the derivatives of g (g > 0).
ScalarDerivatives power_of(const ScalarDerivatives& g, double alpha, double scale = 1.0);

/// Binomial coefficient C(n, k) as a double (0 outside 0 <= k <= n).
double binomial(int n, int k);

}  // namespace pkcurv

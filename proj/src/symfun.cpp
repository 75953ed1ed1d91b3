#include "pkcurv/symfun.hpp"

#include "pkcurv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace pkcurv {

namespace {

// sigma_j read from a table of sigma_0..sigma_m; zero outside the range.
double level(const Eigen::VectorXd& table, int j) {
  if (j < 0 || j >= table.size()) return 0.0;
  return table(j);
}

Eigen::VectorXd sigmas_excluding(const Eigen::VectorXd& lam, int skip_a, int skip_b) {
  const int m = static_cast<int>(lam.size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(m + 1);
  e(0) = 1.0;
  int used = 0;
  for (int i = 0; i < m; ++i) {
    if (i == skip_a || i == skip_b) continue;
    ++used;
    for (int j = used; j >= 1; --j) e(j) += lam(i) * e(j - 1);
  }
  e.conservativeResize(used + 1);
  return e;
}

void check_level(int k, int m) {
  if (k < 0 || k > m) {
    throw DomainError("sigma level " + std::to_string(k) + " outside [0, " +
                      std::to_string(m) + "]");
  }
}

}  // namespace

Eigen::VectorXd all_sigmas(const Eigen::VectorXd& lam) { return sigmas_excluding(lam, -1, -1); }

double sigma(int k, const Eigen::VectorXd& lam) {
  check_level(k, static_cast<int>(lam.size()));
  if (k == 0) return 1.0;
  return all_sigmas(lam)(k);
}

double sigma_minor(int k, const Eigen::VectorXd& lam, std::span<const int> excluded) {
  const int m = static_cast<int>(lam.size());
  if (excluded.size() > 2) throw DomainError("sigma_minor excludes at most two indices");
  for (int idx : excluded) {
    if (idx < 0 || idx >= m) {
      throw DomainError("excluded index " + std::to_string(idx) + " out of range");
    }
  }
  if (excluded.size() == 2 && excluded[0] == excluded[1]) {
    throw DomainError("duplicate excluded index " + std::to_string(excluded[0]));
  }
  if (k == 0) return 1.0;
  const int a = excluded.empty() ? -1 : excluded[0];
  const int b = excluded.size() < 2 ? -1 : excluded[1];
  return level(sigmas_excluding(lam, a, b), k);
}

ConeTest in_gamma_cone(int k, const Eigen::VectorXd& lam) {
  const Eigen::VectorXd s = all_sigmas(lam);
  for (int j = 1; j <= k; ++j) {
    if (!(level(s, j) > 0.0)) return {false, j};
  }
  return {true, 0};
}

double cone_margin(int k, const Eigen::VectorXd& lam) {
  const Eigen::VectorXd s = all_sigmas(lam);
  double margin = std::numeric_limits<double>::infinity();
  for (int j = 1; j <= k; ++j) margin = std::min(margin, level(s, j));
  return margin;
}

double quotient_root(int k, int l, const Eigen::VectorXd& lam) {
  const int m = static_cast<int>(lam.size());
  check_level(k, m);
  if (l < 0 || l >= k) throw DomainError("quotient requires 0 <= l < k");
  const Eigen::VectorXd s = all_sigmas(lam);
  for (int j = 1; j <= k; ++j) {
    if (!(s(j) > 0.0)) {
      throw ConeViolation("vector outside Gamma_" + std::to_string(k) + " (sigma_" +
                              std::to_string(j) + " <= 0)",
                          j);
    }
  }
  return std::pow(s(k) / s(l), 1.0 / (k - l));
}

Eigen::VectorXd sigma_gradient(int k, const Eigen::VectorXd& lam) {
  const int m = static_cast<int>(lam.size());
  check_level(k, m);
  if (k < 1) throw DomainError("sigma_gradient requires k >= 1");
  Eigen::VectorXd g(m);
  for (int i = 0; i < m; ++i) g(i) = level(sigmas_excluding(lam, i, -1), k - 1);
  return g;
}

ScalarDerivatives quotient_derivatives(int k, int l, const Eigen::VectorXd& lam,
                                       bool with_hessian) {
  const int m = static_cast<int>(lam.size());
  check_level(k, m);
  if (l < 0 || l >= k) throw DomainError("quotient requires 0 <= l < k");

  const Eigen::VectorXd s = all_sigmas(lam);
  const double sk = s(k);
  const double sl = s(l);

  ScalarDerivatives out;
  out.value = sk / sl;
  out.gradient.resize(m);

  // sigma_{j}(lam | i) tables, one per i; sigma_{l-1} := 0 for l = 0.
  Eigen::VectorXd dk(m), dl(m);
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd minor = sigmas_excluding(lam, i, -1);
    dk(i) = level(minor, k - 1);
    dl(i) = level(minor, l - 1);
  }
  out.gradient = dk / sl - (sk / (sl * sl)) * dl;

  if (with_hessian) {
    out.hessian.resize(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = i; j < m; ++j) {
        double d2k = 0.0;
        double d2l = 0.0;
        if (i != j) {
          const Eigen::VectorXd minor = sigmas_excluding(lam, i, j);
          d2k = level(minor, k - 2);
          d2l = level(minor, l - 2);
        }
        const double h = d2k / sl - (dk(i) * dl(j) + dk(j) * dl(i)) / (sl * sl) -
                         sk * d2l / (sl * sl) + 2.0 * sk * dl(i) * dl(j) / (sl * sl * sl);
        out.hessian(i, j) = h;
        out.hessian(j, i) = h;
      }
    }
  }
  return out;
}

ScalarDerivatives power_of(const ScalarDerivatives& g, double alpha, double scale) {
  ScalarDerivatives out;
  const double v = g.value;
  const double p0 = std::pow(v, alpha);
  const double p1 = alpha * p0 / v;
  out.value = scale * p0;
  out.gradient = scale * p1 * g.gradient;
  if (g.hessian.size() > 0) {
    const double p2 = alpha * (alpha - 1.0) * p0 / (v * v);
    out.hessian = scale * (p1 * g.hessian + p2 * g.gradient * g.gradient.transpose());
  }
  return out;
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return std::round(c);
}

}  // namespace pkcurv

#include "pkcurv/exterior.hpp"

#include "pkcurv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace pkcurv {

SymMatrix::SymMatrix(int n) : n_(n), data_(static_cast<std::size_t>(n) * (n + 1) / 2, 0.0) {
  if (n < 1) throw DomainError("SymMatrix dimension must be positive");
}

SymMatrix SymMatrix::from_dense(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DomainError("SymMatrix::from_dense needs a square matrix");
  SymMatrix s(static_cast<int>(m.rows()));
  for (int i = 0; i < s.n_; ++i)
    for (int j = i; j < s.n_; ++j) s(i, j) = m(i, j);
  return s;
}

SymMatrix SymMatrix::identity(int n) {
  SymMatrix s(n);
  for (int i = 0; i < n; ++i) s(i, i) = 1.0;
  return s;
}

Eigen::MatrixXd SymMatrix::dense() const {
  Eigen::MatrixXd m(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) m(i, j) = (*this)(i, j);
  return m;
}

// ---------------------------------------------------------------------------

int MultiIndexTable::reorder_sign(int i, const std::vector<int>& rest) {
  const auto smaller = std::count_if(rest.begin(), rest.end(), [i](int x) { return x < i; });
  return (smaller % 2 == 0) ? 1 : -1;
}

MultiIndexTable::MultiIndexTable(int n, int p) : n_(n), p_(p) {
  if (n < 1 || n > 12) throw DomainError("multi-index table needs 1 <= n <= 12");
  if (p < 1 || p > n) throw DomainError("multi-index table needs 1 <= p <= n");

  // Lexicographic enumeration of increasing p-tuples.
  std::vector<int> current(p);
  for (int s = 0; s < p; ++s) current[s] = s;
  while (true) {
    indices_.push_back(current);
    int s = p - 1;
    while (s >= 0 && current[s] == n - p + s) --s;
    if (s < 0) break;
    ++current[s];
    for (int t = s + 1; t < p; ++t) current[t] = current[t - 1] + 1;
  }

  containing_.assign(n, {});
  for (int I = 0; I < size(); ++I) {
    std::vector<int> comp;
    for (int x = 0, s = 0; x < n; ++x) {
      if (s < p && indices_[I][s] == x) {
        ++s;
      } else {
        comp.push_back(x);
      }
    }
    complements_.push_back(std::move(comp));
    for (int x : indices_[I]) containing_[x].push_back(I);
  }

  for (int I = 0; I < size(); ++I) {
    const auto& multi = indices_[I];
    for (int i : multi) {
      std::vector<int> rest;
      for (int x : multi)
        if (x != i) rest.push_back(x);
      for (int j : complements_[I]) {
        std::vector<int> other = rest;
        other.insert(std::upper_bound(other.begin(), other.end(), j), j);
        const int J = find(other);
        adjacency_.push_back({I, J, i, j, reorder_sign(i, rest) * reorder_sign(j, rest)});
      }
    }
  }
}

int MultiIndexTable::find(const std::vector<int>& multi_index) const {
  const auto it = std::lower_bound(indices_.begin(), indices_.end(), multi_index);
  if (it == indices_.end() || *it != multi_index) return -1;
  return static_cast<int>(it - indices_.begin());
}

std::shared_ptr<const MultiIndexTable> build_table(int n, int p) {
  return std::make_shared<const MultiIndexTable>(n, p);
}

DerivationMatrix derivation_matrix(const SymMatrix& a,
                                   const std::shared_ptr<const MultiIndexTable>& table) {
  if (!table) throw DomainError("derivation_matrix needs a table");
  if (a.dim() != table->n()) {
    throw DomainError("matrix dimension " + std::to_string(a.dim()) +
                      " does not match table dimension " + std::to_string(table->n()));
  }
  const int N = table->size();
  DerivationMatrix W{Eigen::MatrixXd::Zero(N, N), table};
  for (int I = 0; I < N; ++I) {
    double diag = 0.0;
    for (int i : table->index(I)) diag += a(i, i);
    W.entries(I, I) = diag;
  }
  for (const auto& adj : table->adjacency()) W.entries(adj.I, adj.J) = adj.sign * a(adj.i, adj.j);
  return W;
}

Eigen::VectorXd lambda_of(const Eigen::VectorXd& kappa, const MultiIndexTable& table) {
  if (kappa.size() != table.n()) {
    throw DomainError("kappa has length " + std::to_string(kappa.size()) + ", table expects " +
                      std::to_string(table.n()));
  }
  Eigen::VectorXd Lambda(table.size());
  for (int I = 0; I < table.size(); ++I) {
    double s = 0.0;
    for (int i : table.index(I)) s += kappa(i);
    Lambda(I) = s;
  }
  return Lambda;
}

ConeTest in_pk_cone(const Eigen::VectorXd& kappa, int k, const MultiIndexTable& table) {
  if (k < 1 || k > table.size()) throw DomainError("(p,k)-cone needs 1 <= k <= N");
  return in_gamma_cone(k, lambda_of(kappa, table));
}

ScalarDerivatives pull_back_to_kappa(const ScalarDerivatives& in_lambda,
                                     const MultiIndexTable& table) {
  const int n = table.n();
  const int N = table.size();
  Eigen::MatrixXd incidence = Eigen::MatrixXd::Zero(N, n);
  for (int I = 0; I < N; ++I)
    for (int i : table.index(I)) incidence(I, i) = 1.0;
  ScalarDerivatives out;
  out.value = in_lambda.value;
  out.gradient = incidence.transpose() * in_lambda.gradient;
  if (in_lambda.hessian.size() > 0) out.hessian = incidence.transpose() * in_lambda.hessian * incidence;
  return out;
}

double spectral_quadratic_form(const Eigen::VectorXd& kappa, const Eigen::MatrixXd& basis,
                               const Eigen::VectorXd& grad, const Eigen::MatrixXd& hess,
                               const Eigen::MatrixXd& xi, double degenerate_gap) {
  const Eigen::MatrixXd rotated = basis.transpose() * xi * basis;
  const int n = static_cast<int>(kappa.size());
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) total += hess(i, j) * rotated(i, i) * rotated(j, j);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double gap = kappa(i) - kappa(j);
      const double divided = std::abs(gap) < degenerate_gap ? hess(i, i) - hess(i, j)
                                                            : (grad(i) - grad(j)) / gap;
      total += divided * rotated(i, j) * rotated(i, j);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------

QuotientOperator::QuotientOperator(std::shared_ptr<const MultiIndexTable> table, int k, int l)
    : table_(std::move(table)), k_(k), l_(l) {
  if (!table_) throw DomainError("QuotientOperator needs a table");
  if (k < 1 || k > table_->size()) {
    throw DomainError("k = " + std::to_string(k) + " outside [1, N = " +
                      std::to_string(table_->size()) + "]");
  }
  if (l < 0 || l >= k) throw DomainError("quotient requires 0 <= l < k");
}

ScalarDerivatives QuotientOperator::kappa_derivatives(const Eigen::VectorXd& kappa,
                                                      bool with_hessian) const {
  return pull_back_to_kappa(quotient_derivatives(k_, l_, lambda_of(kappa, *table_), with_hessian),
                            *table_);
}

CurvaturePoint QuotientOperator::evaluate(const Eigen::MatrixXd& a) const {
  const int n = table_->n();
  if (a.rows() != n || a.cols() != n) throw DomainError("matrix does not match table dimension");

  CurvaturePoint pt;
  pt.a = SymMatrix::from_dense(a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pt.a.dense());
  pt.kappa = eig.eigenvalues();
  pt.basis = eig.eigenvectors();
  pt.Lambda = lambda_of(pt.kappa, *table_);

  const Eigen::VectorXd s = all_sigmas(pt.Lambda);
  pt.cone_margin = std::numeric_limits<double>::infinity();
  for (int j = 1; j <= k_; ++j) {
    pt.cone_margin = std::min(pt.cone_margin, s(j));
    if (!(s(j) > 0.0) && pt.first_failure == 0) pt.first_failure = j;
  }
  pt.cone_ok = pt.first_failure == 0;
  if (!pt.cone_ok) return pt;

  const ScalarDerivatives d = kappa_derivatives(pt.kappa, false);
  pt.F = d.value;
  pt.F_kappa = d.gradient;
  pt.F_grad = SymMatrix::from_dense(pt.basis * d.gradient.asDiagonal() * pt.basis.transpose());
  return pt;
}

double QuotientOperator::hessian_form(const Eigen::MatrixXd& a, const Eigen::MatrixXd& xi) const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const Eigen::VectorXd kappa = eig.eigenvalues();
  const ConeTest cone = in_gamma_cone(k_, lambda_of(kappa, *table_));
  if (!cone) {
    throw ConeViolation("Lambda(kappa) outside Gamma_" + std::to_string(k_), cone.first_failure);
  }
  const ScalarDerivatives d = kappa_derivatives(kappa, true);
  return spectral_quadratic_form(kappa, eig.eigenvectors(), d.gradient, d.hessian, xi);
}

namespace {

void check_table(int p, const std::shared_ptr<const MultiIndexTable>& table) {
  if (!table) throw DomainError("missing multi-index table");
  if (table->p() != p) throw DomainError("table built for a different p");
}

}  // namespace

CurvaturePoint F_and_gradient(const SymMatrix& a, int p, int k, int l,
                              const std::shared_ptr<const MultiIndexTable>& table) {
  check_table(p, table);
  const QuotientOperator op(table, k, l);
  CurvaturePoint pt = op.evaluate(a.dense());
  if (!pt.cone_ok) {
    throw ConeViolation("Lambda(kappa) outside Gamma_" + std::to_string(k) + " (sigma_" +
                            std::to_string(pt.first_failure) + " <= 0)",
                        pt.first_failure);
  }
  return pt;
}

double F_hessian_quadratic_form(const SymMatrix& a, const SymMatrix& xi, int p, int k, int l,
                                const std::shared_ptr<const MultiIndexTable>& table) {
  check_table(p, table);
  if (xi.dim() != a.dim()) throw DomainError("direction dimension mismatch");
  return QuotientOperator(table, k, l).hessian_form(a.dense(), xi.dense());
}

}  // namespace pkcurv

#include "pkcurv/solver.hpp"

#include "pkcurv/errors.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#ifdef PKCURV_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>

namespace pkcurv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

// Restarted GMRES, right preconditioned so the true residual is what the
// tolerance controls. Returns the iteration count, or -1 on breakdown.
template <class Apply, class Prec>
int gmres(const Apply& A, const Prec& M, const Eigen::VectorXd& b, Eigen::VectorXd& x, double tol,
          int restart, int max_iter, double& rel) {
  const Eigen::Index n = b.size();
  const double bnorm = b.norm();
  x.setZero(n);
  Eigen::VectorXd r = b;
  int its = 0;
  Eigen::MatrixXd V(n, restart + 1), Z(n, restart);
  Eigen::MatrixXd Hm = Eigen::MatrixXd::Zero(restart + 1, restart);
  Eigen::VectorXd cs(restart), sn(restart), e(restart + 1);
  rel = 1.0;
  while (its < max_iter) {
    double beta = r.norm();
    rel = beta / bnorm;
    if (rel <= tol) return its;
    V.col(0) = r / beta;
    e.setZero();
    e(0) = beta;
    int j = 0;
    for (; j < restart && its < max_iter; ++j, ++its) {
      Z.col(j) = M(V.col(j));
      Eigen::VectorXd w = A(Z.col(j));
      for (int i = 0; i <= j; ++i) {
        Hm(i, j) = w.dot(V.col(i));
        w -= Hm(i, j) * V.col(i);
      }
      Hm(j + 1, j) = w.norm();
      if (!std::isfinite(Hm(j + 1, j))) return -1;
      if (Hm(j + 1, j) > 0.0) V.col(j + 1) = w / Hm(j + 1, j);
      for (int i = 0; i < j; ++i) {
        const double t = cs(i) * Hm(i, j) + sn(i) * Hm(i + 1, j);
        Hm(i + 1, j) = -sn(i) * Hm(i, j) + cs(i) * Hm(i + 1, j);
        Hm(i, j) = t;
      }
      const double d = std::hypot(Hm(j, j), Hm(j + 1, j));
      if (d == 0.0) return -1;
      cs(j) = Hm(j, j) / d;
      sn(j) = Hm(j + 1, j) / d;
      Hm(j, j) = d;
      Hm(j + 1, j) = 0.0;
      e(j + 1) = -sn(j) * e(j);
      e(j) = cs(j) * e(j);
      if (std::abs(e(j + 1)) / bnorm <= tol) {
        ++j;
        ++its;
        break;
      }
    }
    const Eigen::VectorXd y =
        Hm.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(e.head(j));
    x += Z.leftCols(j) * y;
    r = b - A(x);
    // A restart cycle that gains less than 10% has stagnated at rounding level.
    if (r.norm() > 0.9 * beta) break;
  }
  rel = r.norm() / bnorm;
  return its;
}

}  // namespace

// ---------------------------------------------------------------------------
// SolverConfig

std::vector<double> SolverConfig::uniform_schedule(int count) {
  if (count < 2) throw ConfigError("a t schedule needs at least 2 points");
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) t[static_cast<std::size_t>(i)] = static_cast<double>(i) / (count - 1);
  t.back() = 1.0;
  return t;
}

void SolverConfig::validate() const {
  if (!(newton_tol > 0.0)) throw ConfigError("newton_tol must be positive");
  if (max_newton < 1) throw ConfigError("max_newton must be at least 1");
  if (!(damping > 0.0 && damping < 1.0)) throw ConfigError("damping must lie in (0, 1)");
  if (!(min_step > 0.0 && min_step <= 1.0)) throw ConfigError("min_step must lie in (0, 1]");
  if (t_steps.size() < 2) throw ConfigError("t_steps needs at least two values");
  for (std::size_t i = 0; i < t_steps.size(); ++i) {
    if (!(t_steps[i] >= 0.0 && t_steps[i] <= 1.0)) throw ConfigError("t_steps must lie in [0, 1]");
    if (i > 0 && !(t_steps[i] > t_steps[i - 1])) throw ConfigError("t_steps must increase");
  }
  if (t_steps.back() != 1.0) throw ConfigError("t_steps must end at 1");
  if (eps_schedule.empty()) throw ConfigError("eps_schedule is empty");
  for (std::size_t i = 0; i < eps_schedule.size(); ++i) {
    if (!(eps_schedule[i] > 0.0)) throw ConfigError("eps_schedule values must be positive");
    if (i > 0 && !(eps_schedule[i] < eps_schedule[i - 1]))
      throw ConfigError("eps_schedule must decrease");
  }
  if (!(linear_tol > 0.0 && linear_tol < 1.0)) throw ConfigError("linear_tol must lie in (0, 1)");
  if (gmres_restart < 1 || max_linear_iterations < 1) throw ConfigError("bad GMRES limits");
}

// ---------------------------------------------------------------------------
// LinearSolver

// P = -sym(W B) with W the quadrature weights and B the Jacobian on the
// compact second-order stencil. Near admissible solutions B is a negative
// elliptic operator plus a non-positive diagonal, so P is positive definite
// and a Cholesky factor of it is a good preconditioner for the full
// operator. Falls back to an LU factor of B.
class LowOrderPreconditioner {
 public:
  /// `shift` is added to the diagonal of B when given.
  bool factor(const LinearizedOperator& L, const Eigen::VectorXd* shift = nullptr) {
    const auto& grid = *L.grid();
    weights_ = Eigen::Map<const Eigen::VectorXd>(grid.weights().data(),
                                                 static_cast<Eigen::Index>(grid.size()));
    Eigen::SparseMatrix<double> B = L.assemble_low_order();
    if (shift) {
      for (Eigen::Index i = 0; i < B.rows(); ++i) B.coeffRef(i, i) += (*shift)(i);
    }
    ready_ = false;
    if (!use_lu_) {
      Eigen::SparseMatrix<double> WB = weights_.asDiagonal() * B;
      Eigen::SparseMatrix<double> P = WB.transpose();
      P += WB;
      P *= -0.5;
      chol_ = std::make_unique<Cholesky>();
      chol_->compute(P);
      if (chol_->info() == Eigen::Success) return ready_ = true;
      chol_.reset();
      use_lu_ = true;
    }
    lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
    lu_->compute(B);
    return ready_ = lu_->info() == Eigen::Success;
  }

  bool ready() const noexcept { return ready_; }
  void invalidate() noexcept { ready_ = false; }

  Eigen::VectorXd operator()(const Eigen::VectorXd& v) const {
    if (!use_lu_) return chol_->solve(Eigen::VectorXd(-(weights_.cwiseProduct(v))));
    return lu_->solve(v);
  }

 private:
#ifdef PKCURV_HAVE_CHOLMOD
  using Cholesky = Eigen::CholmodSupernodalLLT<Eigen::SparseMatrix<double>>;
#else
  using Cholesky = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>;
#endif
  Eigen::VectorXd weights_;
  bool ready_ = false;
  bool use_lu_ = false;
  std::unique_ptr<Cholesky> chol_;
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

struct LinearSolver::Impl {
  SolverConfig config;
  LowOrderPreconditioner precond;

  bool direct_for(std::size_t n) const {
    switch (config.linear_solver) {
      case LinearSolverKind::direct: return true;
      case LinearSolverKind::iterative: return false;
      case LinearSolverKind::automatic: return n <= config.direct_limit;
    }
    return true;
  }
};

LinearSolver::LinearSolver(const SolverConfig& config) : impl_(std::make_unique<Impl>()) {
  impl_->config = config;
}
LinearSolver::~LinearSolver() = default;
LinearSolver::LinearSolver(LinearSolver&&) noexcept = default;
LinearSolver& LinearSolver::operator=(LinearSolver&&) noexcept = default;

LinearSolver::Stats LinearSolver::solve(const LinearizedOperator& L, const Eigen::VectorXd& rhs,
                                        Eigen::VectorXd& x, double forcing) {
  Impl& s = *impl_;
  Stats stats;
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) {
    x.setZero(rhs.size());
    stats.ok = true;
    return stats;
  }

  if (s.direct_for(L.size())) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(L.assemble());
    if (lu.info() != Eigen::Success) return stats;
    x = lu.solve(rhs);
    stats.relative_residual = (L.apply(x) - rhs).norm() / bnorm;
    stats.ok = x.allFinite() && stats.relative_residual < 1e-6;
    return stats;
  }

  const double tol = forcing > 0.0 ? std::max(forcing, s.config.linear_tol) : s.config.linear_tol;
  auto A = [&L](const Eigen::VectorXd& v) { return L.apply(v); };
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (!s.precond.ready() || attempt > 0) {
      if (!s.precond.factor(L)) return stats;
      stats.refactored = true;
    }
    double rel = 1.0;
    const int its = gmres(A, s.precond, rhs, x, tol, s.config.gmres_restart,
                          s.config.max_linear_iterations, rel);
    stats.iterations += std::max(its, 0);
    stats.relative_residual = rel;
    // The line search guards every step, so a solve that stalls a little
    // above a tight tolerance is still a usable direction.
    if (its >= 0 && x.allFinite() && rel <= std::max(tol, 1e-6)) {
      stats.ok = true;
      // A stale factor shows up as a growing iteration count.
      if (its > 30) s.precond.invalidate();
      return stats;
    }
    if (stats.refactored) break;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Newton

namespace {

// Size of the rounding error in the discrete residual: |A| |u| eps plus the
// error in F itself, with a safety factor.
double roundoff_floor(const LinearizedOperator& L, const RadialField& u, double F_scale) {
  const Eigen::SparseMatrix<double> A = L.assemble();
  const Eigen::VectorXd au = A.cwiseAbs() * u.u.cwiseAbs();
  return 64.0 * std::numeric_limits<double>::epsilon() * (au.maxCoeff() + F_scale);
}

}  // namespace

NewtonResult newton_solve(const CurvatureEquation& eq, const RadialField& u0,
                          const SolverConfig& config, LinearSolver* linear) {
  config.validate();
  std::optional<LinearSolver> own;
  if (!linear) {
    own.emplace(config);
    linear = &*own;
  }

  NewtonResult out;
  out.u = u0;
  Residual res = eq.residual(u0);  // throws on an inadmissible start
  double rnorm = res.sup_norm();

  for (;;) {
    out.residual = rnorm;
    out.min_margin = res.min_margin();
    if (rnorm <= config.newton_tol) {
      out.converged = true;
      return out;
    }
    if (out.iterations >= config.max_newton) {
      out.failure = "Newton did not converge in " + std::to_string(config.max_newton) +
                    " iterations (residual " + fmt(rnorm) + ")";
      return out;
    }

    const double scale = std::max(res.F_vals.cwiseAbs().maxCoeff(), 1e-300);
    bool exact = config.jacobian == JacobianPolicy::exact ||
                 (config.jacobian == JacobianPolicy::automatic && rnorm / scale <= config.frozen_switch);

    bool accepted = false;
    NewtonStep step;
    step.residual = rnorm;
    for (int pass = 0; pass < 2 && !accepted; ++pass) {
      const LinearizedOperator L =
          eq.linearize(out.u, exact ? JacobianMode::exact : JacobianMode::frozen);
      Eigen::VectorXd du;
      // Inexact Newton: the linear tolerance tracks the nonlinear residual.
      const double forcing = std::min(1e-2, 0.1 * rnorm / scale);
      const LinearSolver::Stats ls = linear->solve(L, -res.r, du, forcing);
      step.linear_iterations += ls.iterations;
      out.linear_iterations += ls.iterations;
      step.exact_jacobian = exact;
      if (!ls.ok) {
        out.failure = "linear solve failed (relative residual " + fmt(ls.relative_residual) + ")";
        return out;
      }

      bool any_admissible = false;
      for (double t = 1.0; t >= config.min_step; t *= config.damping) {
        RadialField trial(out.u.grid, out.u.u + t * du);
        Residual tr = eq.evaluate(trial);
        if (!tr.admissible()) continue;
        any_admissible = true;
        const double tn = tr.sup_norm();
        if (tn <= (1.0 - config.armijo * t) * rnorm) {
          out.u = std::move(trial);
          res = std::move(tr);
          rnorm = tn;
          step.step_length = t;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // Frozen directions can be poor far out; retry once with the exact one.
        if (!exact && config.jacobian == JacobianPolicy::automatic) {
          exact = true;
          continue;
        }
        // Below the rounding level of the stencils no step can decrease the
        // residual; accept there instead of failing.
        const double floor = roundoff_floor(L, out.u, scale);
        if (any_admissible && rnorm <= floor) {
          out.converged = true;
          out.at_roundoff_floor = true;
          out.roundoff_floor = floor;
          return out;
        }
        out.failure = any_admissible ? "line search stalled at residual " + fmt(rnorm)
                                     : "cone collapse: every damped step leaves the (p,k)-cone";
        return out;
      }
    }
    if (!accepted) {
      out.failure = "line search stalled at residual " + fmt(rnorm);
      return out;
    }
    out.steps.push_back(step);
    ++out.iterations;
    if (config.verbose) {
      std::cerr << "  newton " << out.iterations << ": residual " << rnorm << " step "
                << step.step_length << " gmres " << step.linear_iterations
                << (step.exact_jacobian ? "" : " (frozen)") << '\n';
    }
  }
}

NewtonResult newton_solve(const RadialField& u0, const ProblemSpec& spec, const SolverConfig& config) {
  const CurvatureEquation eq(spec, u0.grid);
  return newton_solve(eq, u0, config);
}

// ---------------------------------------------------------------------------
// Convexity certificate

namespace {

// phi(X) = f(X/|X|)^{1/(k-l)} |X|^{b/(k-l)}
double concavity_phi(const ProblemSpec& spec, const Eigen::VectorXd& X) {
  const double r = X.norm();
  const double kl = spec.k - spec.l;
  const double fv = *spec.f.value(X / r);
  return std::pow(fv, 1.0 / kl) * std::pow(r, spec.b / kl);
}

// Richardson-corrected central-difference Hessian.
Eigen::MatrixXd phi_hessian(const ProblemSpec& spec, const Eigen::VectorXd& X, double h) {
  const auto dim = X.size();
  auto raw = [&](double step) {
    Eigen::MatrixXd Hm(dim, dim);
    const double f0 = concavity_phi(spec, X);
    for (Eigen::Index i = 0; i < dim; ++i) {
      for (Eigen::Index j = i; j < dim; ++j) {
        Eigen::VectorXd ei = Eigen::VectorXd::Unit(dim, i) * step;
        Eigen::VectorXd ej = Eigen::VectorXd::Unit(dim, j) * step;
        double v;
        if (i == j) {
          v = (concavity_phi(spec, X + ei) - 2.0 * f0 + concavity_phi(spec, X - ei)) / (step * step);
        } else {
          v = (concavity_phi(spec, X + ei + ej) - concavity_phi(spec, X + ei - ej) -
               concavity_phi(spec, X - ei + ej) + concavity_phi(spec, X - ei - ej)) /
              (4.0 * step * step);
        }
        Hm(i, j) = Hm(j, i) = v;
      }
    }
    return Hm;
  };
  return (4.0 * raw(0.5 * h) - raw(h)) / 3.0;
}

}  // namespace

nlohmann::json CertificateReport::to_json() const {
  return {{"min_h_eigenvalue", min_h_eigenvalue},
          {"argmin_node", argmin_node},
          {"max_abs_kappa", max_abs_kappa},
          {"rank_tolerance", rank_tolerance},
          {"rank_histogram", rank_histogram},
          {"positive_definite", positive_definite},
          {"hypotheses",
           {{"q_nonnegative", q_nonnegative},
            {"concavity_checked", concavity_checked},
            {"concavity_max_eigenvalue", concavity_max_eigenvalue},
            {"concavity_ok", concavity_ok},
            {"hold", hypotheses_hold()}}},
          {"consistent", consistent()}};
}

CertificateReport convexity_certificate(const RadialField& u, const ProblemSpec& spec) {
  spec.validate();
  const SphereGrid& grid = *u.grid;
  const int n = grid.dim();
  CertificateReport rep;
  rep.min_h_eigenvalue = kInf;

  // Eigenvalues of h relative to g: the principal curvatures.
  std::vector<Eigen::VectorXd> kappas(grid.size());
  for (std::size_t node = 0; node < grid.size(); ++node) {
    const EmbeddedPoint e = embed_point(u, node);
    kappas[node] = principal_curvatures_from_forms(e.g, e.h);
    const double m = kappas[node].minCoeff();
    if (m < rep.min_h_eigenvalue) {
      rep.min_h_eigenvalue = m;
      rep.argmin_node = node;
    }
    rep.max_abs_kappa = std::max(rep.max_abs_kappa, kappas[node].cwiseAbs().maxCoeff());
  }
  rep.rank_tolerance = 1e-8 * rep.max_abs_kappa;
  rep.rank_histogram.assign(static_cast<std::size_t>(n + 1), 0);
  for (const auto& kap : kappas) {
    const auto rank = (kap.array() > rep.rank_tolerance).count();
    ++rep.rank_histogram[static_cast<std::size_t>(rank)];
  }
  rep.positive_definite = rep.min_h_eigenvalue > 0.0 && std::isfinite(rep.min_h_eigenvalue);
  rep.q_nonnegative = spec.q >= 0.0;

  // Concavity of phi on the shell swept by the solution; tables have no
  // off-grid values, so the check is skipped for them.
  if (spec.f.kind() != RhsFunction::Kind::table) {
    rep.concavity_checked = true;
    const double rmin = std::exp(-u.u.maxCoeff());
    const double rmax = std::exp(-u.u.minCoeff());
    const std::size_t stride = std::max<std::size_t>(1, grid.size() / 400);
    double worst = -kInf;
    for (double r : {rmin, 0.5 * (rmin + rmax), rmax}) {
      for (std::size_t node = 0; node < grid.size(); node += stride) {
        const Eigen::VectorXd X = r * grid.point(node);
        const Eigen::MatrixXd Hm = phi_hessian(spec, X, 1e-2 * r);
        const double scale = std::abs(concavity_phi(spec, X)) / (r * r);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hm, Eigen::EigenvaluesOnly);
        worst = std::max(worst, es.eigenvalues().maxCoeff() / scale);
      }
    }
    rep.concavity_max_eigenvalue = worst;
    rep.concavity_ok = worst <= 1e-8;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Reports

TraceRow describe(const CurvatureEquation& eq, const RadialField& u, const Residual& res) {
  TraceRow row;
  row.residual = res.sup_norm();
  row.min_rho = std::exp(-u.u.maxCoeff());
  row.max_rho = std::exp(-u.u.minCoeff());
  row.cone_margin = res.min_margin();
  double m = kInf;
  for (std::size_t node = 0; node < eq.grid()->size(); ++node) {
    m = std::min(m, geometry_point(u, node).principal_curvatures().minCoeff());
  }
  row.min_h_eigenvalue = m;
  return row;
}

nlohmann::json SolveReport::to_json() const {
  nlohmann::json j;
  j["problem"] = spec.to_json();
  j["grid"] = {{"n", u_final.grid->dim()},
               {"resolution", u_final.grid->resolution()},
               {"nodes", u_final.grid->size()}};
  j["regime"] = spec.regime() == ProblemSpec::Regime::homogeneous ? "homogeneous" : "nonhomogeneous";
  j["converged"] = converged;
  j["message"] = message;
  j["residual"] = residual;
  j["min_cone_margin"] = min_margin;
  j["min_rho"] = std::exp(-u_final.u.maxCoeff());
  j["max_rho"] = std::exp(-u_final.u.minCoeff());
  if (gamma) {
    j["gamma"] = *gamma;
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : gamma_samples) {
      samples.push_back({{"epsilon", s.epsilon},
                         {"gamma", s.gamma},
                         {"min_rho", s.min_rho},
                         {"converged", s.converged}});
    }
    j["gamma_samples"] = samples;
    j["gamma_cauchy"] = gamma_cauchy;
    j["gamma_spread"] = gamma_spread;
    if (gamma_newton) j["gamma_newton"] = *gamma_newton;
  }
  j["audits"] = audits.to_json();
  j["certificate"] = certificate.to_json();
  j["warnings"] = warnings;
  j["runtime_seconds"] = runtime_seconds;
  return j;
}

void SolveReport::write_solution_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  const SphereGrid& grid = *u_final.grid;
  const int n = grid.dim();
  os << "node";
  for (int i = 0; i < n; ++i) os << ",theta" << i + 1;
  for (int i = 0; i <= n; ++i) os << ",x" << i;
  os << ",u,rho";
  for (int i = 0; i < n; ++i) os << ",kappa" << i + 1;
  os << ",cone_margin\n";
  const Residual res = CurvatureEquation(spec, u_final.grid).evaluate(u_final);
  for (std::size_t node = 0; node < grid.size(); ++node) {
    const auto th = grid.angles(node);
    const Eigen::VectorXd x = grid.point(node);
    os << node;
    for (int i = 0; i < n; ++i) os << ',' << fmt(th[static_cast<std::size_t>(i)]);
    for (int i = 0; i <= n; ++i) os << ',' << fmt(x(i));
    os << ',' << fmt(u_final.u(static_cast<Eigen::Index>(node))) << ',' << fmt(u_final.rho(node));
    const Eigen::VectorXd kap = geometry_point(u_final, node).principal_curvatures();
    std::vector<double> ks(kap.data(), kap.data() + kap.size());
    std::sort(ks.begin(), ks.end());
    for (double k : ks) os << ',' << fmt(k);
    os << ',' << fmt(res.cone_margin(static_cast<Eigen::Index>(node))) << '\n';
  }
}

void SolveReport::write_trace_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "stage,parameter,newton_iterations,linear_iterations,residual,min_rho,max_rho,"
        "cone_margin,min_h_eigenvalue,converged\n";
  for (const auto& r : trace) {
    os << r.stage << ',' << fmt(r.parameter) << ',' << r.newton_iterations << ','
       << r.linear_iterations << ',' << fmt(r.residual) << ',' << fmt(r.min_rho) << ','
       << fmt(r.max_rho) << ',' << fmt(r.cone_margin) << ',' << fmt(r.min_h_eigenvalue) << ','
       << (r.converged ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Continuation

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void finish(SolveReport& rep, const ProblemSpec& audit_spec) {
  rep.audits = audit_bounds(rep.u_final, audit_spec);
  rep.certificate = convexity_certificate(rep.u_final, audit_spec);
  if (rep.converged && !rep.audits.pass()) {
    rep.warnings.push_back("solution fails the a priori bound audit");
  }
}

struct PathResult {
  RadialField u;
  bool converged = false;
  std::string message;
  double residual = 0.0;
  double min_margin = 0.0;
};

PathResult run_continuation(const ProblemSpec& spec, const std::shared_ptr<const SphereGrid>& grid,
                            const SolverConfig& config, LinearSolver& linear,
                            std::vector<TraceRow>& trace) {
  CurvatureEquation eq(spec, grid);
  const double kl = spec.k - spec.l;
  const double K = spec.sphere_constant();
  const Eigen::VectorXd root_f = eq.rhs_values().array().pow(1.0 / kl).matrix();
  const double root_K = std::pow(K, 1.0 / kl);
  auto f_at = [&](double t) -> Eigen::VectorXd {
    return (t * root_f.array() + (1.0 - t) * root_K).pow(kl).matrix();
  };

  PathResult out;
  out.u = RadialField::constant(grid, 0.0);
  double t_done = -1.0;
  std::vector<double> pending(config.t_steps.rbegin(), config.t_steps.rend());
  while (!pending.empty()) {
    const double t = pending.back();
    eq.set_rhs_values(f_at(t));
    NewtonResult nr = newton_solve(eq, out.u, config, &linear);
    if (!nr.converged) {
      if (t_done < 0.0 || t - t_done < 2.0 * config.min_t_step) {
        out.message = "continuation stalled at t = " + fmt(t) + ": " + nr.failure;
        out.residual = nr.residual;
        return out;
      }
      pending.push_back(0.5 * (t_done + t));
      if (config.verbose) std::cerr << "bisecting t to " << pending.back() << " (" << nr.failure << ")\n";
      continue;
    }
    pending.pop_back();
    t_done = t;
    out.u = std::move(nr.u);
    out.residual = nr.residual;
    out.min_margin = nr.min_margin;
    TraceRow row = describe(eq, out.u, eq.evaluate(out.u));
    row.stage = "t";
    row.parameter = t;
    row.newton_iterations = nr.iterations;
    row.linear_iterations = nr.linear_iterations;
    row.converged = true;
    trace.push_back(row);
    if (config.verbose) {
      std::cerr << "t = " << t << ": " << nr.iterations << " Newton steps, residual " << nr.residual
                << '\n';
    }
  }
  out.converged = true;
  return out;
}

}  // namespace

SolveReport continuation_solve(const ProblemSpec& spec, std::shared_ptr<const SphereGrid> grid,
                               const SolverConfig& config) {
  const auto t0 = Clock::now();
  spec.validate();
  config.validate();
  if (!(spec.gauge_exponent() > 0.0)) {
    throw ConfigError("continuation needs -b-q-k+l+epsilon > 0; use the homogeneous solver");
  }
  SolveReport rep;
  rep.spec = spec;
  rep.warnings = spec.warnings();
  LinearSolver linear(config);
  PathResult pr = run_continuation(spec, grid, config, linear, rep.trace);
  rep.u_final = std::move(pr.u);
  rep.converged = pr.converged;
  rep.message = pr.converged ? "converged" : pr.message;
  rep.residual = pr.residual;
  rep.min_margin = pr.min_margin;
  finish(rep, spec);
  rep.runtime_seconds = seconds_since(t0);
  return rep;
}

Residual homogeneous_residual(const RadialField& u, const ProblemSpec& spec, double gamma) {
  ProblemSpec s = spec;
  s.epsilon = 0.0;
  s.f = spec.f.scaled(gamma);
  return CurvatureEquation(s, u.grid).evaluate(u);
}

namespace {

struct PolishResult {
  RadialField u;
  double log_gamma = 0.0;
  bool converged = false;
  double residual = 0.0;
  int iterations = 0;
  std::string failure;
};

// Newton on the epsilon = 0 equation F = gamma f v^{k-l-q} in the unknowns
// (u, log gamma), bordered by sum w_i du_i = 0 to remove the constant
// kernel. The preconditioner is the low-order factor of the operator with a
// small epsilon-like diagonal shift.
PolishResult polish_homogeneous(const ProblemSpec& spec0, const RadialField& u0, double log_gamma0,
                                double shift_eps, const SolverConfig& config) {
  const auto& grid = u0.grid;
  CurvatureEquation eq(spec0, grid);
  const Eigen::VectorXd f = eq.rhs_values();
  const auto size = static_cast<Eigen::Index>(grid->size());
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(grid->weights().data(), size);
  w /= w.sum();

  PolishResult out;
  out.u = u0;
  out.log_gamma = log_gamma0;
  auto eval = [&](const RadialField& u, double g) {
    eq.set_rhs_values(f * std::exp(g));
    return eq.evaluate(u);
  };
  Residual res = eval(out.u, out.log_gamma);
  if (!res.admissible()) {
    out.failure = "start outside the cone";
    return out;
  }
  double rnorm = res.sup_norm();
  LowOrderPreconditioner P;

  for (;;) {
    out.residual = rnorm;
    if (rnorm <= config.newton_tol) {
      out.converged = true;
      return out;
    }
    if (out.iterations >= config.max_newton) {
      out.failure = "no convergence in " + std::to_string(config.max_newton) + " iterations";
      return out;
    }
    eq.set_rhs_values(f * std::exp(out.log_gamma));
    const LinearizedOperator L = eq.linearize(out.u, JacobianMode::exact);
    const Eigen::VectorXd rhs_vals = res.F_vals - res.r;
    if (!P.ready()) {
      const Eigen::VectorXd shift = -shift_eps * rhs_vals;
      if (!P.factor(L, &shift)) {
        out.failure = "preconditioner factorization failed";
        return out;
      }
    }
    auto A = [&](const Eigen::VectorXd& x) {
      Eigen::VectorXd y(size + 1);
      y.head(size) = L.apply(x.head(size)) - rhs_vals * x(size);
      y(size) = w.dot(x.head(size));
      return y;
    };
    auto M = [&](const Eigen::VectorXd& y) {
      Eigen::VectorXd x(size + 1);
      x.head(size) = P(y.head(size));
      x(size) = y(size);
      return x;
    };
    Eigen::VectorXd b = Eigen::VectorXd::Zero(size + 1);
    b.head(size) = -res.r;
    Eigen::VectorXd dx;
    const double scale = std::max(res.F_vals.cwiseAbs().maxCoeff(), 1e-300);
    const double tol = std::max(std::min(1e-2, 0.1 * rnorm / scale), config.linear_tol);
    double rel = 1.0;
    const int its = gmres(A, M, b, dx, tol, config.gmres_restart, config.max_linear_iterations, rel);
    if (its < 0 || !dx.allFinite() || rel > std::max(tol, 1e-6)) {
      out.failure = "bordered linear solve failed (relative residual " + fmt(rel) + ")";
      return out;
    }
    if (its > 30) P.invalidate();

    bool accepted = false;
    for (double t = 1.0; t >= config.min_step; t *= config.damping) {
      RadialField trial(grid, out.u.u + t * dx.head(size));
      const double g = out.log_gamma + t * dx(size);
      Residual tr = eval(trial, g);
      if (!tr.admissible()) continue;
      const double tn = tr.sup_norm();
      if (tn <= (1.0 - config.armijo * t) * rnorm) {
        out.u = std::move(trial);
        out.log_gamma = g;
        res = std::move(tr);
        rnorm = tn;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (rnorm <= roundoff_floor(L, out.u, scale)) {
        out.converged = true;
        return out;
      }
      out.failure = "line search stalled at residual " + fmt(rnorm);
      return out;
    }
    ++out.iterations;
    if (config.verbose) {
      std::cerr << "  polish " << out.iterations << ": residual " << rnorm << " gamma "
                << std::exp(out.log_gamma) << " gmres " << its << '\n';
    }
  }
}

}  // namespace

SolveReport homogeneous_solve(const ProblemSpec& spec, std::shared_ptr<const SphereGrid> grid,
                              const SolverConfig& config) {
  const auto t0 = Clock::now();
  spec.validate();
  config.validate();
  if (spec.regime() != ProblemSpec::Regime::homogeneous) {
    throw ConfigError("homogeneous solver needs -b-q-k+l = 0");
  }
  SolveReport rep;
  rep.spec = spec;
  rep.spec.epsilon = 0.0;
  rep.warnings = spec.warnings();
  rep.u_final = RadialField::constant(grid, 0.0);
  LinearSolver linear(config);

  bool all_ok = true;
  RadialField ubar = RadialField::constant(grid, 0.0);
  std::optional<double> gamma_prev;
  for (double eps : config.eps_schedule) {
    ProblemSpec se = spec;
    se.epsilon = eps;
    CurvatureEquation eq(se, grid);
    NewtonResult nr;
    bool done = false;
    if (gamma_prev) {
      // At the new epsilon the same normalized shape and gamma give the
      // start u = ubar + log(gamma) / epsilon.
      RadialField start(grid, (ubar.u.array() + std::log(*gamma_prev) / eps).matrix());
      if (eq.evaluate(start).admissible()) {
        nr = newton_solve(eq, start, config, &linear);
        done = nr.converged;
      }
    }
    int newton_its = nr.iterations;
    int linear_its = nr.linear_iterations;
    RadialField u(grid, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid->size())));
    if (done) {
      u = std::move(nr.u);
    } else {
      std::vector<TraceRow> sub;
      PathResult pr = run_continuation(se, grid, config, linear, sub);
      for (const auto& r : sub) {
        newton_its += r.newton_iterations;
        linear_its += r.linear_iterations;
      }
      if (!pr.converged) {
        rep.message = "epsilon = " + fmt(eps) + ": " + pr.message;
        all_ok = false;
        rep.gamma_samples.push_back({eps, std::exp(eps * pr.u.u.maxCoeff()),
                                     std::exp(-pr.u.u.maxCoeff()), false});
        break;
      }
      u = std::move(pr.u);
    }
    const Residual res = eq.evaluate(u);
    const double umax = u.u.maxCoeff();
    const double gamma_eps = std::exp(eps * umax);
    rep.gamma_samples.push_back({eps, gamma_eps, std::exp(-umax), true});
    TraceRow row = describe(eq, u, res);
    row.stage = "eps";
    row.parameter = eps;
    row.newton_iterations = newton_its;
    row.linear_iterations = linear_its;
    row.converged = true;
    rep.trace.push_back(row);
    rep.residual = res.sup_norm();
    rep.min_margin = res.min_margin();
    ubar = RadialField(grid, (u.u.array() - umax).matrix());
    gamma_prev = gamma_eps;
    if (config.verbose) std::cerr << "eps = " << eps << ": gamma_eps " << gamma_eps << '\n';
  }

  // Polynomial extrapolation to epsilon = 0 through the last (up to) three
  // samples.
  std::vector<GammaSample> ok;
  for (const auto& s : rep.gamma_samples)
    if (s.converged) ok.push_back(s);
  if (!ok.empty()) {
    const std::size_t m = std::min<std::size_t>(3, ok.size());
    double g = 0.0;
    for (std::size_t i = ok.size() - m; i < ok.size(); ++i) {
      double w = 1.0;  // Lagrange basis at 0
      for (std::size_t j = ok.size() - m; j < ok.size(); ++j) {
        if (j != i) w *= ok[j].epsilon / (ok[j].epsilon - ok[i].epsilon);
      }
      g += w * ok[i].gamma;
    }
    rep.gamma = g;
    double lo = kInf, hi = -kInf, mean = 0.0;
    for (std::size_t i = ok.size() - m; i < ok.size(); ++i) {
      lo = std::min(lo, ok[i].gamma);
      hi = std::max(hi, ok[i].gamma);
      mean += ok[i].gamma / static_cast<double>(m);
    }
    rep.gamma_spread = (hi - lo) / std::abs(mean);
    rep.gamma_cauchy = rep.gamma_spread <= 1e-3;
    if (!rep.gamma_cauchy) {
      rep.warnings.push_back("gamma_epsilon is not settled: relative spread " + fmt(rep.gamma_spread) +
                             " over the last samples");
    }
  }

  rep.u_final = std::move(ubar);
  rep.converged = all_ok && rep.gamma.has_value();
  if (rep.converged) {
    rep.message = "converged";
    // The last regularized shape solves the limit equation only up to
    // O(epsilon); finish with Newton on the limit equation itself.
    PolishResult pr = polish_homogeneous(rep.spec, rep.u_final, std::log(*rep.gamma),
                                         config.eps_schedule.back(), config);
    if (pr.converged) {
      rep.u_final = RadialField(grid, (pr.u.u.array() - pr.u.u.maxCoeff()).matrix());
      rep.gamma_newton = std::exp(pr.log_gamma);
    } else {
      rep.warnings.push_back("Newton on the limit equation failed: " + pr.failure);
    }
    const Residual hr =
        homogeneous_residual(rep.u_final, rep.spec, rep.gamma_newton.value_or(*rep.gamma));
    rep.residual = hr.sup_norm();
    rep.min_margin = hr.min_margin();
  }
  finish(rep, rep.spec);
  rep.runtime_seconds = seconds_since(t0);
  return rep;
}

}  // namespace pkcurv

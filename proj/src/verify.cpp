#include "pkcurv/verify.hpp"

#include "pkcurv/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>

namespace pkcurv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Running worst slack for one property.
class Tally {
 public:
  Tally(std::string name, double tolerance, std::uint64_t seed)
      : name_(std::move(name)), tolerance_(tolerance), seed_(seed) {}

  void add(double slack) {
    ++trials_;
    if (!(slack >= worst_)) worst_ = std::isnan(slack) ? -kInf : slack;
  }
  void draws(std::size_t total, std::size_t accepted) {
    draws_ += total;
    accepted_ += accepted;
  }

  PropertyReport report() const {
    PropertyReport r;
    r.name = name_;
    r.trials = trials_;
    r.worst_slack = trials_ ? worst_ : 0.0;
    r.tolerance = tolerance_;
    r.pass = r.worst_slack >= -tolerance_;
    r.seed = seed_;
    r.acceptance_rate = draws_ ? static_cast<double>(accepted_) / static_cast<double>(draws_) : 1.0;
    return r;
  }

 private:
  std::string name_;
  double tolerance_;
  std::uint64_t seed_;
  int trials_ = 0;
  double worst_ = kInf;
  std::size_t draws_ = 0;
  std::size_t accepted_ = 0;
};

// Independent stream per (seed, property, trial).
std::mt19937_64 trial_rng(std::uint64_t seed, std::uint32_t property, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), property,
                    static_cast<std::uint32_t>(trial)};
  return std::mt19937_64(seq);
}

Eigen::VectorXd gaussian_vector(std::mt19937_64& rng, int m, double mean, double sd) {
  std::normal_distribution<double> g(mean, sd);
  Eigen::VectorXd v(m);
  for (int i = 0; i < m; ++i) v(i) = g(rng);
  return v;
}

Eigen::MatrixXd random_symmetric(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  return 0.5 * (a + a.transpose());
}

Eigen::MatrixXd random_rotation(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  // Fix signs so the distribution is Haar.
  const Eigen::MatrixXd r = qr.matrixQR();
  for (int i = 0; i < n; ++i)
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  return q;
}

// Gaussian(1, 0.3) samples, rejected until `accept` holds.
template <class Accept>
std::optional<Eigen::VectorXd> sample_cone(std::mt19937_64& rng, int m, Tally& tally, Accept accept) {
  for (int draw = 1; draw <= 10000; ++draw) {
    Eigen::VectorXd v = gaussian_vector(rng, m, 1.0, 0.3);
    if (accept(v)) {
      tally.draws(static_cast<std::size_t>(draw), 1);
      return v;
    }
  }
  tally.draws(10000, 0);
  return std::nullopt;
}

double rel(double err, double scale) { return err / std::max(scale, 1.0); }

// (m, k, l) with 0 <= l < k <= m, 3 <= m <= 6.
std::vector<std::array<int, 3>> symfun_configs() {
  std::vector<std::array<int, 3>> out;
  for (int m = 3; m <= 6; ++m)
    for (int k = 1; k <= m; ++k)
      for (int l = 0; l < k; ++l) out.push_back({m, k, l});
  return out;
}

double quotient_root_value(int k, int l, const Eigen::VectorXd& lam) {
  return std::pow(sigma(k, lam) / sigma(l, lam), 1.0 / (k - l));
}

}  // namespace

// ---------------------------------------------------------------------------
// PropertyReport

nlohmann::json PropertyReport::to_json() const {
  nlohmann::json j = {{"name", name},
                      {"trials", trials},
                      {"worst_slack", worst_slack},
                      {"tolerance", tolerance},
                      {"pass", pass},
                      {"seed", seed},
                      {"applicable", applicable},
                      {"acceptance_rate", acceptance_rate}};
  if (!detail.empty()) j["detail"] = detail;
  return j;
}

bool all_pass(const std::vector<PropertyReport>& reports) {
  return std::all_of(reports.begin(), reports.end(),
                     [](const PropertyReport& r) { return !r.applicable || r.pass; });
}

nlohmann::json to_json(const std::vector<PropertyReport>& reports) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(r.to_json());
  return j;
}

void print_table(std::ostream& os, const std::vector<PropertyReport>& reports) {
  std::size_t width = 8;
  for (const auto& r : reports) width = std::max(width, r.name.size());
  os << std::left << std::setw(static_cast<int>(width)) << "property" << "  " << std::right
     << std::setw(7) << "trials" << "  " << std::setw(13) << "worst_slack" << "  " << std::setw(9)
     << "tolerance" << "  result\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << std::right
       << std::setw(7) << r.trials << "  " << std::setw(13) << std::setprecision(4)
       << std::scientific << r.worst_slack + 0.0 << "  " << std::setw(9) << std::setprecision(1)
       << r.tolerance << std::defaultfloat << "  "
       << (!r.applicable ? "n/a" : r.pass ? "pass" : "FAIL") << '\n';
  }
}

// ---------------------------------------------------------------------------
// symfun suite

std::vector<PropertyReport> run_symfun_suite(int trials, std::uint64_t seed) {
  SuiteOptions o;
  o.trials = trials;
  o.seed = seed;
  return run_symfun_suite(o);
}

std::vector<PropertyReport> run_symfun_suite(const SuiteOptions& options) {
  if (options.trials < 1) throw ConfigError("trials must be at least 1");
  const auto configs = symfun_configs();
  const std::uint64_t seed = options.seed;

  Tally minor_identity("sigma_minor_identity", 1e-12, seed);
  Tally minor_sum("minor_sum_identity", 1e-12, seed);
  Tally grad_pos("sigma_gradient_positive", 0.0, seed);
  Tally grad_sum("quotient_gradient_sum", 1e-10, seed);
  Tally grad_fd("quotient_gradient_fd", 1e-6, seed);
  Tally concave("quotient_concavity", 1e-10, seed);
  Tally top_entry("largest_entry_bound", 1e-12, seed);
  Tally nm("newton_maclaurin", 1e-12, seed);
  Tally sig_fd("sigma_gradient_fd", 1e-6, seed);
  Tally boundary("cone_boundary_probe", 0.0, seed);
  Tally ones("all_ones_binomial", 0.0, seed);

  for (int t = 0; t < options.trials; ++t) {
    const auto [m, k, l] = configs[static_cast<std::size_t>(t) % configs.size()];

    {  // Identities hold for every lambda.
      auto rng = trial_rng(seed, 1, t);
      const Eigen::VectorXd lam = gaussian_vector(rng, m, 1.0, 0.3);
      double worst1 = kInf, worst2 = kInf;
      for (int kk = 1; kk <= m; ++kk) {
        const double s = sigma(kk, lam);
        double sum = 0.0;
        for (int i = 0; i < m; ++i) {
          const int ex[1] = {i};
          const double a = sigma_minor(kk, lam, ex);
          const double b = lam(i) * sigma_minor(kk - 1, lam, ex);
          worst1 = std::min(worst1, -rel(std::abs(s - a - b), std::abs(a) + std::abs(b)));
          sum += sigma_minor(kk - 1, lam, ex);
        }
        const double target = (m - kk + 1) * sigma(kk - 1, lam);
        worst2 = std::min(worst2, -rel(std::abs(sum - target), std::abs(target)));
      }
      minor_identity.add(worst1);
      minor_sum.add(worst2);
    }

    {  // Gradient of sigma_k in Gamma_k, quotient gradient, largest entry.
      auto rng = trial_rng(seed, 2, t);
      auto lam = sample_cone(rng, m, grad_pos, [&](const Eigen::VectorXd& v) { return in_gamma_cone(k, v).inside; });
      if (lam) {
        const Eigen::VectorXd g = sigma_gradient(k, *lam);
        grad_pos.add(g.minCoeff() / g.cwiseAbs().maxCoeff());

        const ScalarDerivatives q =
            power_of(quotient_derivatives(k, l, *lam, false), 1.0 / (k - l));
        const double bound = std::pow(binomial(m, k) / binomial(m, l), 1.0 / (k - l));
        grad_sum.add((q.gradient.sum() - bound) / bound);

        const double h = 1e-6;
        double err = 0.0;
        for (int i = 0; i < m; ++i) {
          Eigen::VectorXd up = *lam, dn = *lam;
          up(i) += h;
          dn(i) -= h;
          const double fd = (quotient_root_value(k, l, up) - quotient_root_value(k, l, dn)) / (2 * h);
          err = std::max(err, std::abs(fd - q.gradient(i)));
        }
        grad_fd.add(-err / q.gradient.cwiseAbs().maxCoeff());

        Eigen::VectorXd sorted = *lam;
        std::sort(sorted.data(), sorted.data() + m, std::greater<double>());
        const int ex[1] = {0};
        const double lhs = sorted(0) * sigma_minor(k - 1, sorted, ex);
        const double rhs = static_cast<double>(k) / m * sigma(k, sorted);
        top_entry.add(rel(lhs - rhs, std::abs(lhs)));
      }
    }

    {  // Concavity along segments of Gamma_k (a convex cone).
      auto rng = trial_rng(seed, 3, t);
      auto in_cone = [&](const Eigen::VectorXd& v) { return in_gamma_cone(k, v).inside; };
      auto a = sample_cone(rng, m, concave, in_cone);
      auto b = sample_cone(rng, m, concave, in_cone);
      if (a && b) {
        const double fa = quotient_root_value(k, l, *a);
        const double fb = quotient_root_value(k, l, *b);
        const double fm = quotient_root_value(k, l, 0.5 * (*a + *b));
        concave.add(rel(fm - 0.5 * (fa + fb), std::abs(fm)));
      }
    }

    {  // Generalized Newton-MacLaurin with mm = k as the cone level.
      auto rng = trial_rng(seed, 4, t);
      const int mm = k;
      auto lam = sample_cone(rng, m, nm, [&](const Eigen::VectorXd& v) { return in_gamma_cone(mm, v).inside; });
      if (lam) {
        const Eigen::VectorXd s = all_sigmas(*lam);
        auto normalized = [&](int j) { return s(j) / binomial(m, j); };
        double worst = kInf;
        for (int ll = 0; ll < mm; ++ll)
          for (int r = 1; r <= mm; ++r)
            for (int ss = 0; ss < r && ss <= ll; ++ss) {
              const double lhs = std::pow(normalized(mm) / normalized(ll), 1.0 / (mm - ll));
              const double rhs = std::pow(normalized(r) / normalized(ss), 1.0 / (r - ss));
              worst = std::min(worst, (rhs - lhs) / rhs);
            }
        nm.add(worst);
      }
    }

    {  // sigma_gradient against central differences.
      auto rng = trial_rng(seed, 5, t);
      const Eigen::VectorXd lam = gaussian_vector(rng, m, 1.0, 0.3);
      const Eigen::VectorXd g = sigma_gradient(k, lam);
      const double h = 1e-6;
      double err = 0.0;
      for (int i = 0; i < m; ++i) {
        Eigen::VectorXd up = lam, dn = lam;
        up(i) += h;
        dn(i) -= h;
        err = std::max(err, std::abs((sigma(k, up) - sigma(k, dn)) / (2 * h) - g(i)));
      }
      sig_fd.add(-err / std::max(g.cwiseAbs().maxCoeff(), 1e-300));
    }

    {  // Bisection along a ray leaving Gamma_k: membership flips where the
       // first sigma_j crosses zero.
      auto rng = trial_rng(seed, 6, t);
      auto lam = sample_cone(rng, m, boundary, [&](const Eigen::VectorXd& v) { return in_gamma_cone(k, v).inside; });
      if (lam) {
        Eigen::VectorXd dir = gaussian_vector(rng, m, 0.0, 1.0);
        dir -= Eigen::VectorXd::Constant(m, dir.mean() + 1.0);  // sigma_1 decreases along dir
        double lo = 0.0, hi = 1.0;
        while (in_gamma_cone(k, *lam + hi * dir).inside) hi *= 2.0;
        for (int it = 0; it < 80; ++it) {
          const double mid = 0.5 * (lo + hi);
          (in_gamma_cone(k, *lam + mid * dir).inside ? lo : hi) = mid;
        }
        const Eigen::VectorXd in = *lam + lo * dir, out = *lam + hi * dir;
        const ConeTest test = in_gamma_cone(k, out);
        const Eigen::VectorXd s_in = all_sigmas(in), s_out = all_sigmas(out);
        bool ok = !test.inside && test.first_failure >= 1 && s_out(test.first_failure) <= 0.0;
        for (int j = 1; j <= k; ++j) ok = ok && s_in(j) > 0.0;
        for (int j = 1; j < test.first_failure; ++j) ok = ok && s_out(j) > 0.0;
        boundary.add(ok ? 0.0 : -1.0);
      }
    }
  }

  for (int m = 3; m <= 6; ++m) {
    const Eigen::VectorXd lam = Eigen::VectorXd::Ones(m);
    for (int k = 0; k <= m; ++k) ones.add(-std::abs(sigma(k, lam) - binomial(m, k)));
  }

  return {minor_identity.report(), minor_sum.report(), grad_pos.report(), grad_sum.report(),
          grad_fd.report(),        concave.report(),   top_entry.report(), nm.report(),
          sig_fd.report(),         boundary.report(),  ones.report()};
}

// ---------------------------------------------------------------------------
// exterior suite

namespace {

struct ExteriorTallies {
  explicit ExteriorTallies(std::uint64_t seed)
      : eig_sum("eigenvalue_sum_identity", 1e-9, seed),
        equivariance("basis_equivariance", 1e-9, seed),
        elliptic("ellipticity", 0.0, seed),
        concavity("concavity", 1e-7, seed),
        grad_sum("gradient_sum_bound", 1e-9, seed),
        inverse("inverse_convexity", 1e-8, seed),
        second_deriv("second_derivative_bound", 1e-8, seed),
        grad_fd("F_gradient_fd", 1e-6, seed) {}

  Tally eig_sum, equivariance, elliptic, concavity, grad_sum, inverse, second_deriv, grad_fd;

  std::vector<PropertyReport> reports() const {
    return {eig_sum.report(), equivariance.report(), elliptic.report(), concavity.report(),
            grad_sum.report(), inverse.report(),     second_deriv.report(),  grad_fd.report()};
  }
};

Eigen::VectorXd sorted(Eigen::VectorXd v) {
  std::sort(v.data(), v.data() + v.size());
  return v;
}

void exterior_trial(int n, int p, int k, int l, const std::shared_ptr<const MultiIndexTable>& table,
                    std::uint64_t seed, int t, ExteriorTallies& T) {
  const QuotientOperator op(table, k, l);
  const int N = table->size();
  const double beta = 1.0 / (k - l);
  auto in_pk = [&](const Eigen::VectorXd& kap) { return in_pk_cone(kap, k, *table).inside; };

  {  // Eigenvalues of W(A) are the I-sums; W(R^T A R) has the same spectrum.
    auto rng = trial_rng(seed, 11, t);
    const Eigen::VectorXd kap = gaussian_vector(rng, n, 1.0, 0.3);
    const Eigen::MatrixXd Q = random_rotation(rng, n);
    const Eigen::MatrixXd A = Q * kap.asDiagonal() * Q.transpose();
    const Eigen::MatrixXd W = derivation_matrix(SymMatrix::from_dense(A), table).entries;
    const Eigen::VectorXd ew = sorted(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(W).eigenvalues());
    const Eigen::VectorXd es = sorted(lambda_of(kap, *table));
    const double scale = std::max(1.0, es.cwiseAbs().maxCoeff());
    T.eig_sum.add(-(ew - es).cwiseAbs().maxCoeff() / scale);

    const Eigen::MatrixXd R = random_rotation(rng, n);
    const Eigen::MatrixXd W2 =
        derivation_matrix(SymMatrix::from_dense(R.transpose() * A * R), table).entries;
    const Eigen::VectorXd ew2 = sorted(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(W2).eigenvalues());
    T.equivariance.add(-(ew2 - ew).cwiseAbs().maxCoeff() / scale);
  }

  {  // Ellipticity, concavity and the gradient-sum bound in kappa.
    auto rng = trial_rng(seed, 12, t);
    auto kap = sample_cone(rng, n, T.elliptic, in_pk);
    if (kap) {
      auto root = [&](const Eigen::VectorXd& x) { return power_of(op.kappa_derivatives(x, false), beta); };
      const ScalarDerivatives d = root(*kap);
      T.elliptic.add(d.gradient.minCoeff() / d.gradient.cwiseAbs().maxCoeff());
      const double bound = p * std::pow(binomial(N, k) / binomial(N, l), beta);
      T.grad_sum.add((d.gradient.sum() - bound) / bound);

      // Hessian by central differences of the analytic gradient.
      const double h = 1e-5;
      Eigen::MatrixXd H(n, n);
      bool inside = true;
      for (int i = 0; i < n && inside; ++i) {
        Eigen::VectorXd up = *kap, dn = *kap;
        up(i) += h;
        dn(i) -= h;
        inside = in_pk(up) && in_pk(dn);
        if (inside) H.col(i) = (root(up).gradient - root(dn).gradient) / (2 * h);
      }
      if (inside) {
        H = 0.5 * (H + H.transpose()).eval();
        const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().maxCoeff();
        T.concavity.add(-top * kap->squaredNorm() / d.value);
      }
    }
  }

  {  // Inverse convexity of -F^{-1/(k-l)} for positive definite A.
    auto rng = trial_rng(seed, 13, t);
    auto kap = sample_cone(rng, n, T.inverse,
                           [&](const Eigen::VectorXd& v) { return in_gamma_cone(n, v).inside; });
    if (kap) {
      const Eigen::MatrixXd Q = random_rotation(rng, n);
      const Eigen::MatrixXd A = Q * kap->asDiagonal() * Q.transpose();
      const Eigen::MatrixXd xi = random_symmetric(rng, n);
      const CurvaturePoint pt = op.evaluate(A);
      const Eigen::MatrixXd Fg = pt.F_grad.dense();
      const double dF = (Fg.cwiseProduct(xi)).sum();
      const double d2F = op.hessian_form(A, xi);
      const double F = pt.F;
      const double d2G = beta * std::pow(F, -beta - 1) * d2F - beta * (beta + 1) * std::pow(F, -beta - 2) * dF * dF;
      const Eigen::MatrixXd Gg = beta * std::pow(F, -beta - 1) * Fg;
      const Eigen::MatrixXd Ainv = Q * kap->cwiseInverse().asDiagonal() * Q.transpose();
      const double form = d2G + 2.0 * (Gg.cwiseProduct(xi * Ainv * xi)).sum();
      T.inverse.add(form / xi.squaredNorm());
    }
  }

  {  // Second-derivative bound for sigma_k(Lambda) along a direction.
    auto rng = trial_rng(seed, 14, t);
    auto kap = sample_cone(rng, n, T.second_deriv, in_pk);
    if (kap) {
      const QuotientOperator sk(table, k, 0);
      const Eigen::MatrixXd Q = random_rotation(rng, n);
      const Eigen::MatrixXd A = Q * kap->asDiagonal() * Q.transpose();
      const Eigen::MatrixXd xi = random_symmetric(rng, n);
      const CurvaturePoint pt = sk.evaluate(A);
      const double s_k = pt.F;
      const double ds_k = (pt.F_grad.dense().cwiseProduct(xi)).sum();
      const double s_1 = pt.Lambda.sum();
      const double ds_1 = binomial(n - 1, p - 1) * xi.trace();
      const double lhs = sk.hessian_form(A, xi);
      const double a = ds_k / s_k, b = ds_1 / s_1;
      double worst = kInf;
      for (double alpha : {0.5, 1.0, 2.0}) {
        const double rhs = s_k * (a - b) * ((alpha + 1) * a - (alpha - 1) * b);
        worst = std::min(worst, (rhs - lhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)}));
      }
      T.second_deriv.add(worst);
    }
  }

  {  // dF/da_ij against central differences over every symmetric entry.
    auto rng = trial_rng(seed, 15, t);
    auto kap = sample_cone(rng, n, T.grad_fd, in_pk);
    if (kap) {
      const Eigen::MatrixXd Q = random_rotation(rng, n);
      const Eigen::MatrixXd A = Q * kap->asDiagonal() * Q.transpose();
      const CurvaturePoint pt = F_and_gradient(SymMatrix::from_dense(A), p, k, l, table);
      const Eigen::MatrixXd Fg = pt.F_grad.dense();
      const double h = 1e-6;
      double err = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, n);
          E(i, j) = E(j, i) = 1.0;
          const double fd = (op.evaluate(A + h * E).F - op.evaluate(A - h * E).F) / (2 * h);
          const double an = (Fg.cwiseProduct(E)).sum();
          err = std::max(err, std::abs(fd - an));
        }
      T.grad_fd.add(-err / std::max(Fg.cwiseAbs().maxCoeff(), 1e-300));
    }
  }
}

}  // namespace

std::vector<PropertyReport> run_exterior_suite(int trials, std::uint64_t seed) {
  SuiteOptions o;
  o.trials = trials;
  o.seed = seed;
  return run_exterior_suite(o);
}

std::vector<PropertyReport> run_exterior_suite(const SuiteOptions& options) {
  if (options.trials < 1) throw ConfigError("trials must be at least 1");
  struct Config {
    int n, p, k, l;
  };
  std::vector<Config> configs;
  std::map<std::pair<int, int>, std::shared_ptr<const MultiIndexTable>> tables;
  for (int n = options.min_n; n <= options.max_n; ++n)
    for (int p = 1; p <= n; ++p) {
      const int N = static_cast<int>(binomial(n, p));
      if (N > options.max_N) continue;
      tables[{n, p}] = build_table(n, p);
      for (int k = 1; k <= N; ++k)
        for (int l = 0; l < k; ++l) configs.push_back({n, p, k, l});
    }
  if (configs.empty()) throw ConfigError("no exterior configurations in range");

  ExteriorTallies T(options.seed);
  for (int t = 0; t < options.trials; ++t) {
    const Config& c = configs[static_cast<std::size_t>(t) % configs.size()];
    exterior_trial(c.n, c.p, c.k, c.l, tables.at({c.n, c.p}), options.seed, t, T);
  }
  auto reports = T.reports();
  const std::string detail = std::to_string(configs.size()) + " (n,p,k,l) configurations";
  for (auto& r : reports) r.detail = detail;
  return reports;
}

std::vector<PropertyReport> run_exterior_suite(int n, int p, int k, int l, int trials,
                                               std::uint64_t seed) {
  if (trials < 1) throw ConfigError("trials must be at least 1");
  const auto table = build_table(n, p);
  if (!(0 <= l && l < k && k <= table->size())) throw ConfigError("need 0 <= l < k <= C(n,p)");
  ExteriorTallies T(seed);
  for (int t = 0; t < trials; ++t) exterior_trial(n, p, k, l, table, seed, t, T);
  return T.reports();
}

// ---------------------------------------------------------------------------
// solution audits

std::vector<PropertyReport> run_solution_audits(const SolveReport& report, const ProblemSpec& spec) {
  spec.validate();
  const RadialField& u = report.u_final;
  const bool homogeneous = spec.regime() == ProblemSpec::Regime::homogeneous;
  const double gamma = report.gamma_newton.value_or(report.gamma.value_or(1.0));

  auto make = [](std::string name, double slack, double tol) {
    PropertyReport r;
    r.name = std::move(name);
    r.trials = 1;
    r.worst_slack = slack;
    r.tolerance = tol;
    r.pass = slack >= -tol;
    return r;
  };

  std::vector<PropertyReport> out;
  const Residual res = homogeneous ? homogeneous_residual(u, spec, gamma)
                                   : CurvatureEquation(spec, u.grid).evaluate(u);
  const double scale = res.admissible() ? res.F_vals.cwiseAbs().maxCoeff() : 1.0;
  out.push_back(make("residual", -res.sup_norm() / scale, 1e-8));
  out.back().detail = "sup |F - RHS| / max |F|";
  const bool solved = out.back().pass;

  const BoundReport b = audit_bounds(u, spec);
  PropertyReport c0 = make("c0_containment", b.c0_slack, 1e-6);
  c0.applicable = b.c0_applicable;
  out.push_back(c0);

  out.push_back(make("gradient_finite",
                     b.finite && std::isfinite(b.max_grad_log_rho) ? 0.0 : -kInf, 0.0));
  out.back().detail = "max |grad log rho| = " + std::to_string(b.max_grad_log_rho);

  out.push_back(make("cone_margin", res.admissible() ? res.min_margin() / scale : -kInf, 0.0));

  const CertificateReport cert = convexity_certificate(u, spec);
  PropertyReport cc = make("certificate_consistency", cert.min_h_eigenvalue, 0.0);
  cc.applicable = cert.hypotheses_hold();
  if (!cc.applicable) cc.pass = true;
  cc.detail = "min h eigenvalue " + std::to_string(cert.min_h_eigenvalue);
  out.push_back(cc);

  // Dilation law: nonhomogeneous u - log(s)/E solves the s f problem;
  // homogeneous residuals are unchanged under rho -> 2 rho.
  const RadialField shifted(u.grid, (u.u.array() - std::log(2.0) / (homogeneous ? 1.0 : spec.gauge_exponent())).matrix());
  Residual dil;
  if (homogeneous) {
    dil = homogeneous_residual(shifted, spec, gamma);
    out.push_back(make("dilation_law", -(dil.r - res.r).cwiseAbs().maxCoeff() / scale, 1e-10));
  } else {
    ProblemSpec s2 = spec;
    s2.f = spec.f.scaled(2.0);
    dil = CurvatureEquation(s2, u.grid).evaluate(shifted);
    out.push_back(make("dilation_law", -(dil.r - res.r).cwiseAbs().maxCoeff() / scale, 1e-10));
  }
  out.back().detail = homogeneous ? "rho -> 2 rho" : "f -> 2 f, rho -> 2^{1/E} rho";

  if (!solved) {
    for (std::size_t i = 1; i < out.size(); ++i) {
      out[i].applicable = false;
      out[i].pass = true;
      out[i].detail = "not a solution";
    }
  }
  return out;
}

}  // namespace pkcurv

#include "pkcurv/pde.hpp"

#include "pkcurv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace pkcurv {

namespace {

constexpr double kRegimeTol = 1e-12;

std::vector<double> read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open f table " + path.string());
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find_last_of(',');
    const std::string field = comma == std::string::npos ? line : line.substr(comma + 1);
    try {
      std::size_t used = 0;
      const double v = std::stod(field, &used);
      values.push_back(v);
    } catch (const std::exception&) {
      if (values.empty() && line_no == 1) continue;  // header row
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": not a number: " + field);
    }
  }
  return values;
}

}  // namespace

// ---------------------------------------------------------------------------
// RhsFunction

RhsFunction RhsFunction::constant(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("constant f must be positive and finite");
  RhsFunction f;
  f.kind_ = Kind::constant;
  f.coeffs_ = {c};
  return f;
}

RhsFunction RhsFunction::harmonic(std::vector<double> coeffs, double floor) {
  if (coeffs.empty()) throw ConfigError("harmonic f needs at least one coefficient");
  if (!(floor > 0.0)) throw ConfigError("harmonic f needs a positive floor");
  RhsFunction f;
  f.kind_ = Kind::harmonic;
  f.coeffs_ = std::move(coeffs);
  f.floor_ = floor;
  return f;
}

RhsFunction RhsFunction::exp_harmonic(std::vector<double> coeffs) {
  if (coeffs.empty()) throw ConfigError("exp_harmonic f needs at least one coefficient");
  RhsFunction f;
  f.kind_ = Kind::exp_harmonic;
  f.coeffs_ = std::move(coeffs);
  return f;
}

RhsFunction RhsFunction::table(std::vector<double> values, std::string source) {
  if (values.empty()) throw ConfigError("empty f table");
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("f table values must be positive");
  }
  RhsFunction f;
  f.kind_ = Kind::table;
  f.coeffs_ = std::move(values);
  f.source_ = std::move(source);
  return f;
}

std::optional<double> RhsFunction::value(const Eigen::VectorXd& x) const {
  auto linear = [&] {
    if (coeffs_.size() > static_cast<std::size_t>(x.size()) + 1) {
      throw ConfigError("f has " + std::to_string(coeffs_.size()) +
                        " coefficients, at most " + std::to_string(x.size() + 1) +
                        " allowed in this dimension");
    }
    double s = coeffs_[0];
    for (std::size_t i = 1; i < coeffs_.size(); ++i) s += coeffs_[i] * x(static_cast<Eigen::Index>(i - 1));
    return s;
  };
  switch (kind_) {
    case Kind::constant:
      return coeffs_[0];
    case Kind::harmonic:
      return std::max(floor_, linear());
    case Kind::exp_harmonic:
      return std::exp(linear());
    case Kind::table:
      return std::nullopt;
  }
  return std::nullopt;
}

Eigen::VectorXd RhsFunction::sample(const SphereGrid& grid) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  if (kind_ == Kind::table) {
    if (coeffs_.size() != grid.size()) {
      throw ConfigError("f table has " + std::to_string(coeffs_.size()) + " values, grid has " +
                        std::to_string(grid.size()) + " nodes");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) out(static_cast<Eigen::Index>(i)) = coeffs_[i];
  } else {
    for (std::size_t i = 0; i < grid.size(); ++i)
      out(static_cast<Eigen::Index>(i)) = *value(grid.point(i));
  }
  if (!(out.minCoeff() > 0.0) || !out.allFinite()) throw ConfigError("f must be positive on the grid");
  return out;
}

std::optional<double> RhsFunction::clip_margin(const SphereGrid& grid) const {
  if (kind_ != Kind::harmonic) return std::nullopt;
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXd x = grid.point(i);
    double s = coeffs_[0];
    for (std::size_t c = 1; c < coeffs_.size() && c <= static_cast<std::size_t>(x.size()); ++c)
      s += coeffs_[c] * x(static_cast<Eigen::Index>(c - 1));
    margin = std::min(margin, s - floor_);
  }
  return margin;
}

RhsFunction RhsFunction::scaled(double s) const {
  if (!(s > 0.0)) throw ConfigError("f can only be scaled by a positive factor");
  RhsFunction out = *this;
  switch (kind_) {
    case Kind::exp_harmonic:
      out.coeffs_[0] += std::log(s);
      break;
    case Kind::harmonic:
      out.floor_ *= s;
      [[fallthrough]];
    default:
      for (double& c : out.coeffs_) c *= s;
  }
  out.source_.clear();
  return out;
}

nlohmann::json RhsFunction::to_json() const {
  switch (kind_) {
    case Kind::constant:
      return {{"type", "constant"}, {"c", coeffs_[0]}};
    case Kind::harmonic:
      return {{"type", "harmonic"}, {"coeffs", coeffs_}, {"floor", floor_}};
    case Kind::exp_harmonic:
      return {{"type", "exp_harmonic"}, {"coeffs", coeffs_}};
    case Kind::table:
      if (!source_.empty()) return {{"type", "table"}, {"path", source_}};
      return {{"type", "table"}, {"values", coeffs_}};
  }
  return {};
}

RhsFunction RhsFunction::from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  if (!j.is_object() || !j.contains("type")) throw ConfigError("f must be an object with a \"type\"");
  const std::string type = j.at("type").get<std::string>();
  if (type == "constant") return constant(j.at("c").get<double>());
  if (type == "harmonic") {
    return harmonic(j.at("coeffs").get<std::vector<double>>(), j.value("floor", 1e-3));
  }
  if (type == "exp_harmonic") return exp_harmonic(j.at("coeffs").get<std::vector<double>>());
  if (type == "table") {
    if (j.contains("values")) return table(j.at("values").get<std::vector<double>>());
    const std::filesystem::path rel = j.at("path").get<std::string>();
    const std::filesystem::path path = rel.is_absolute() || base.empty() ? rel : base / rel;
    return table(read_table(path), path.string());
  }
  throw ConfigError("unknown f type \"" + type + "\" (expected constant, harmonic, exp_harmonic, table)");
}

// ---------------------------------------------------------------------------
// ProblemSpec

int ProblemSpec::N() const { return static_cast<int>(binomial(n, p)); }

ProblemSpec::Regime ProblemSpec::regime() const {
  return std::abs(exponent()) <= kRegimeTol ? Regime::homogeneous : Regime::nonhomogeneous;
}

double ProblemSpec::sphere_constant() const {
  return binomial(N(), k) / binomial(N(), l) * std::pow(static_cast<double>(p), k - l);
}

void ProblemSpec::validate() const {
  if (n < 1 || n > 12) throw ConfigError("n must be in [1, 12], got " + std::to_string(n));
  if (p < 1 || p > n) throw ConfigError("p must satisfy 1 <= p <= n");
  if (k < 1 || k > N()) {
    throw ConfigError("k must satisfy 1 <= k <= N = C(n,p) = " + std::to_string(N()));
  }
  if (l < 0 || l >= k) {
    throw ConfigError("l = " + std::to_string(l) + " and k = " + std::to_string(k) +
                      " violate 0 <= l < k");
  }
  if (!std::isfinite(b) || !std::isfinite(q)) throw ConfigError("b and q must be finite");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (exponent() < -kRegimeTol) {
    throw ConfigError("-b-q-k+l = " + std::to_string(exponent()) +
                      " is negative; only -b-q-k+l >= 0 is supported");
  }
}

std::vector<std::string> ProblemSpec::warnings() const {
  std::vector<std::string> out;
  const int m = static_cast<int>(binomial(n - 1, p - 1));
  if (!(2 < k && k <= m + 1)) {
    out.push_back("k = " + std::to_string(k) + " is outside 2 < k <= C(n-1,p-1)+1 = " +
                  std::to_string(m + 1) + "; curvature estimates are not guaranteed");
  }
  if (!(l < std::min(m, k))) {
    out.push_back("l = " + std::to_string(l) + " is not below min(C(n-1,p-1), k) = " +
                  std::to_string(std::min(m, k)) + "; curvature estimates are not guaranteed");
  }
  if (l == 0 && q > 1.0) out.push_back("q > 1 for a sigma_k equation; estimates need q <= 1");
  return out;
}

nlohmann::json ProblemSpec::to_json() const {
  return {{"n", n},       {"p", p}, {"k", k},           {"l", l},
          {"b", b},       {"q", q}, {"epsilon", epsilon}, {"f", f.to_json()}};
}

ProblemSpec ProblemSpec::from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  ProblemSpec s;
  try {
    if (!j.is_object()) throw ConfigError("problem must be a JSON object");
    for (const char* key : {"n", "p", "k", "l", "b", "q", "f"}) {
      if (!j.contains(key)) throw ConfigError(std::string("problem is missing \"") + key + "\"");
    }
    s.n = j.at("n").get<int>();
    s.p = j.at("p").get<int>();
    s.k = j.at("k").get<int>();
    s.l = j.at("l").get<int>();
    s.b = j.at("b").get<double>();
    s.q = j.at("q").get<double>();
    s.epsilon = j.value("epsilon", 0.0);
    s.f = RhsFunction::from_json(j.at("f"), base);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad problem field: ") + e.what());
  }
  s.validate();
  return s;
}

ProblemSpec ProblemSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open problem file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": malformed JSON");
  }
  return from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// CurvatureEquation

CurvatureEquation::CurvatureEquation(ProblemSpec spec, std::shared_ptr<const SphereGrid> grid)
    : spec_((spec.validate(), std::move(spec))),
      grid_(std::move(grid)),
      op_(build_table(spec_.n, spec_.p), spec_.k, spec_.l) {
  if (!grid_) throw ConfigError("equation needs a grid");
  if (grid_->dim() != spec_.n) {
    throw ConfigError("grid dimension " + std::to_string(grid_->dim()) + " does not match n = " +
                      std::to_string(spec_.n));
  }
  f_ = spec_.f.sample(*grid_);
}

void CurvatureEquation::set_rhs_values(Eigen::VectorXd f) {
  if (static_cast<std::size_t>(f.size()) != grid_->size()) throw DomainError("f size mismatch");
  if (!(f.minCoeff() > 0.0)) throw DomainError("f must be positive");
  f_ = std::move(f);
}

Residual CurvatureEquation::evaluate(const RadialField& u) const {
  if (u.grid.get() != grid_.get() && (u.grid->dim() != grid_->dim() ||
                                      u.grid->resolution() != grid_->resolution())) {
    throw DomainError("field lives on a different grid");
  }
  const std::size_t size = grid_->size();
  const auto& D = grid_->differences();
  const double c = spec_.gauge_exponent();
  const double vexp = spec_.k - spec_.l - spec_.q;

  Residual res;
  res.r.resize(static_cast<Eigen::Index>(size));
  res.F_vals.resize(static_cast<Eigen::Index>(size));
  res.cone_margin.resize(static_cast<Eigen::Index>(size));
  res.cone_ok.assign(size, 0);
  double worst = std::numeric_limits<double>::infinity();

  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  for (std::size_t node = 0; node < size; ++node) {
    const auto i = static_cast<Eigen::Index>(node);
    D.frame_jet({u.u.data(), size}, node, g, H);
    const CurvaturePoint pt = op_.evaluate(shape_matrix(g, H).dense());
    res.cone_margin(i) = pt.cone_margin;
    if (pt.cone_margin < worst) {
      worst = pt.cone_margin;
      res.worst_node = node;
      res.worst_level = pt.first_failure;
    }
    if (!pt.cone_ok) {
      ++res.violations;
      res.r(i) = std::numeric_limits<double>::infinity();
      res.F_vals(i) = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    res.cone_ok[node] = 1;
    const double v2 = 1.0 + g.squaredNorm();
    const double rhs = f_(i) * std::exp(c * u.u(i)) * std::pow(v2, 0.5 * vexp);
    res.F_vals(i) = pt.F;
    res.r(i) = pt.F - rhs;
  }
  return res;
}

Residual CurvatureEquation::residual(const RadialField& u) const {
  Residual res = evaluate(u);
  if (!res.admissible()) {
    throw ConeViolation(std::to_string(res.violations) + " node(s) outside the (p,k)-cone; worst node " +
                            std::to_string(res.worst_node) + " has sigma_" +
                            std::to_string(res.worst_level) + " <= 0",
                        res.worst_level, res.worst_node, res.violations);
  }
  return res;
}

LinearizedOperator CurvatureEquation::linearize(const RadialField& u, JacobianMode mode) const {
  const std::size_t size = grid_->size();
  const auto& D = grid_->differences();
  const int n = spec_.n;
  const double c = spec_.gauge_exponent();
  const double vexp = spec_.k - spec_.l - spec_.q;

  LinearizedOperator L;
  L.grid_ = grid_;
  L.stride_ = D.num_partials();
  L.coeff_.assign(size * L.stride_, 0.0);
  L.diag_.resize(static_cast<Eigen::Index>(size));

  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  for (std::size_t node = 0; node < size; ++node) {
    const auto i = static_cast<Eigen::Index>(node);
    D.frame_jet({u.u.data(), size}, node, g, H);
    const CurvaturePoint pt = op_.evaluate(shape_matrix(g, H).dense());
    if (!pt.cone_ok) {
      throw ConeViolation("cannot linearize: node " + std::to_string(node) +
                              " outside the (p,k)-cone",
                          pt.first_failure, node, 1);
    }
    const double v2 = 1.0 + g.squaredNorm();
    const double rhs = f_(i) * std::exp(c * u.u(i)) * std::pow(v2, 0.5 * vexp);

    ShapePullback pb = shape_matrix_pullback(g, H, pt.F_grad.dense());
    if (mode == JacobianMode::frozen) pb.dgrad.setZero(n);
    pb.dgrad -= rhs * vexp / v2 * g;
    L.diag_(i) = -rhs * c;
    D.pull_back(node, pb.dgrad, pb.dhess,
                {L.coeff_.data() + node * L.stride_, static_cast<std::size_t>(L.stride_)});
  }
  return L;
}

Residual residual(const RadialField& u, const ProblemSpec& spec) {
  return CurvatureEquation(spec, u.grid).residual(u);
}

LinearizedOperator linearize(const RadialField& u, const ProblemSpec& spec, JacobianMode mode) {
  return CurvatureEquation(spec, u.grid).linearize(u, mode);
}

// ---------------------------------------------------------------------------
// LinearizedOperator

Eigen::VectorXd LinearizedOperator::apply(const Eigen::VectorXd& du) const {
  if (du.size() != diag_.size()) throw DomainError("perturbation size mismatch");
  const auto& D = grid_->differences();
  const std::size_t size = grid_->size();
  Eigen::VectorXd out(diag_.size());
  for (std::size_t node = 0; node < size; ++node) {
    const auto i = static_cast<Eigen::Index>(node);
    out(i) = D.apply(node, {coeff_.data() + node * stride_, static_cast<std::size_t>(stride_)},
                     {du.data(), size}) +
             diag_(i) * du(i);
  }
  return out;
}

Eigen::SparseMatrix<double> LinearizedOperator::assemble_with(const FrameDifferences& D) const {
  const std::size_t size = grid_->size();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(size * 64);
  for (std::size_t node = 0; node < size; ++node) {
    const auto row = static_cast<int>(node);
    D.scatter(node, {coeff_.data() + node * stride_, static_cast<std::size_t>(stride_)},
              [&](std::uint32_t col, double w) {
                if (w != 0.0) triplets.emplace_back(row, static_cast<int>(col), w);
              });
    triplets.emplace_back(row, row, diag_(static_cast<Eigen::Index>(node)));
  }
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
  A.setFromTriplets(triplets.begin(), triplets.end());
  A.makeCompressed();
  return A;
}

Eigen::SparseMatrix<double> LinearizedOperator::assemble() const {
  return assemble_with(grid_->differences(StencilOrder::fourth));
}

Eigen::SparseMatrix<double> LinearizedOperator::assemble_low_order() const {
  return assemble_with(grid_->differences(StencilOrder::second));
}

// ---------------------------------------------------------------------------
// Audits

Eigen::VectorXd log_gradient_norm(const SphereGrid& grid, const Eigen::VectorXd& f) {
  const Eigen::VectorXd logf = f.array().log().matrix();
  Eigen::VectorXd out(f.size());
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  for (std::size_t node = 0; node < grid.size(); ++node) {
    grid.differences().frame_jet({logf.data(), grid.size()}, node, g, H);
    out(static_cast<Eigen::Index>(node)) = g.norm();
  }
  return out;
}

nlohmann::json BoundReport::to_json() const {
  nlohmann::json j = {{"min_rho", min_rho},
                      {"max_rho", max_rho},
                      {"max_grad_log_rho", max_grad_log_rho},
                      {"max_abs_kappa", max_abs_kappa},
                      {"finite", finite},
                      {"pass", pass()}};
  j["c0"] = {{"applicable", c0_applicable}};
  if (c0_applicable) {
    j["c0"]["lower"] = c0_lower;
    j["c0"]["upper"] = c0_upper;
    j["c0"]["slack"] = c0_slack;
    j["c0"]["tolerance"] = 1e-6;
    j["c0"]["ok"] = c0_ok;
  }
  j["gradient_hypothesis"] = {{"applicable", gradient_hypothesis_applicable}};
  if (gradient_hypothesis_applicable) {
    j["gradient_hypothesis"]["ratio"] = gradient_ratio;
    j["gradient_hypothesis"]["threshold"] = gradient_threshold;
    j["gradient_hypothesis"]["ok"] = gradient_hypothesis_ok;
  }
  return j;
}

BoundReport audit_bounds(const RadialField& u, const ProblemSpec& spec) {
  spec.validate();
  const SphereGrid& grid = *u.grid;
  BoundReport rep;
  rep.finite = u.u.allFinite();
  rep.min_rho = std::exp(-u.u.maxCoeff());
  rep.max_rho = std::exp(-u.u.minCoeff());

  const Eigen::VectorXd f = spec.f.sample(grid);
  const double c = spec.gauge_exponent();
  if (c > kRegimeTol) {
    const double K = spec.sphere_constant();
    rep.c0_applicable = true;
    rep.c0_lower = std::pow(f.minCoeff() / K, 1.0 / c);
    rep.c0_upper = std::pow(f.maxCoeff() / K, 1.0 / c);
    rep.c0_slack = std::min(rep.min_rho - rep.c0_lower, rep.c0_upper - rep.max_rho) / rep.c0_upper;
    rep.c0_ok = rep.c0_slack >= -1e-6;
  }

  for (std::size_t node = 0; node < grid.size(); ++node) {
    const GeometryPoint pt = geometry_point(u, node);
    rep.max_grad_log_rho = std::max(rep.max_grad_log_rho, pt.grad_u.norm());
    rep.max_abs_kappa = std::max(rep.max_abs_kappa, pt.principal_curvatures().cwiseAbs().maxCoeff());
  }
  rep.finite = rep.finite && std::isfinite(rep.max_abs_kappa);

  if (spec.regime() == ProblemSpec::Regime::homogeneous && spec.q == 0.0) {
    rep.gradient_hypothesis_applicable = true;
    rep.gradient_ratio = log_gradient_norm(grid, f).maxCoeff();
    rep.gradient_threshold = 2.0 * (spec.k - spec.l) * std::sqrt((spec.p - 1.0) / spec.p);
    rep.gradient_hypothesis_ok = rep.gradient_ratio <= 1e-12 || rep.gradient_ratio < rep.gradient_threshold;
  }
  return rep;
}

}  // namespace pkcurv

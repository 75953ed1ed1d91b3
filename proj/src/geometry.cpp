#include "pkcurv/geometry.hpp"

#include "pkcurv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace pkcurv {

namespace {

// int_0^x sin^m(t) dt
double sin_power_integral(int m, double x) {
  if (m == 0) return x;
  if (m == 1) return 1.0 - std::cos(x);
  return -std::pow(std::sin(x), m - 1) * std::cos(x) / m +
         (m - 1.0) / m * sin_power_integral(m - 2, x);
}

}  // namespace

// ---------------------------------------------------------------------------
// SphereGrid

std::shared_ptr<const SphereGrid> SphereGrid::create(int n, int resolution) {
  return std::shared_ptr<const SphereGrid>(new SphereGrid(n, resolution));
}

SphereGrid::SphereGrid(int n, int resolution) : n_(n), res_(resolution) {
  if (n < 1 || n > 6) throw DomainError("sphere dimension must be in [1, 6]");
  if (resolution < 4 || resolution % 2 != 0) {
    throw DomainError("grid resolution must be even and >= 4, got " + std::to_string(resolution));
  }
  size_ = 1;
  for (int r = 0; r < n; ++r) {
    if (size_ > (std::size_t{1} << 26) / static_cast<std::size_t>(res_)) {
      throw DomainError("grid too large");
    }
    size_ *= static_cast<std::size_t>(res_);
  }

  angles_.resize(size_ * n_);
  scale_.resize(size_ * n_);
  cot_.assign(size_ * n_, 0.0);
  weights_.resize(size_);

  // Per-axis cell weights: polar axis q carries sin^{n-1-q}.
  std::vector<std::vector<double>> axis_weight(n_);
  for (int r = 0; r < n_; ++r) {
    const double h = spacing(r);
    axis_weight[r].resize(res_);
    for (int j = 0; j < res_; ++j) {
      if (r == n_ - 1) {
        axis_weight[r][j] = h;
      } else {
        const int m = n_ - 1 - r;
        axis_weight[r][j] = sin_power_integral(m, (j + 1) * h) - sin_power_integral(m, j * h);
      }
    }
  }

  std::vector<int> multi(n_, 0);
  for (std::size_t node = 0; node < size_; ++node) {
    double w = 1.0;
    double h = 1.0;
    for (int r = 0; r < n_; ++r) {
      const int j = multi[r];
      const double x = (r == n_ - 1) ? j * spacing(r) : (j + 0.5) * spacing(r);
      angles_[node * n_ + r] = x;
      scale_[node * n_ + r] = h;
      if (r < n_ - 1) {
        cot_[node * n_ + r] = std::cos(x) / std::sin(x);
        h *= std::sin(x);
      }
      w *= axis_weight[r][j];
    }
    weights_[node] = w;
    for (int r = n_ - 1; r >= 0; --r) {
      if (++multi[r] < res_) break;
      multi[r] = 0;
    }
  }

  fourth_ = std::make_unique<FrameDifferences>(*this, StencilOrder::fourth);
  second_ = std::make_unique<FrameDifferences>(*this, StencilOrder::second);
}

double SphereGrid::spacing(int axis) const noexcept {
  return (axis == n_ - 1 ? 2.0 : 1.0) * std::numbers::pi / res_;
}

double SphereGrid::sphere_area(int n) {
  const double half = 0.5 * (n + 1);
  return 2.0 * std::pow(std::numbers::pi, half) / std::tgamma(half);
}

Eigen::VectorXd SphereGrid::point(std::size_t node) const {
  const auto x = angles(node);
  Eigen::VectorXd y(n_ + 1);
  double prod = 1.0;
  for (int m = 0; m < n_; ++m) {
    y(m) = prod * std::cos(x[m]);
    prod *= std::sin(x[m]);
  }
  y(n_) = prod;
  return y;
}

Eigen::MatrixXd SphereGrid::frame(std::size_t node) const {
  const auto x = angles(node);
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n_ + 1, n_);
  for (int r = 0; r < n_; ++r) {
    E(r, r) = -std::sin(x[r]);
    double prod = std::cos(x[r]);
    for (int m = r + 1; m <= n_; ++m) {
      E(m, r) = (m < n_) ? prod * std::cos(x[m]) : prod;
      if (m < n_) prod *= std::sin(x[m]);
    }
  }
  return E;
}

bool SphereGrid::pole_adjacent(std::size_t node) const {
  const auto multi = multi_index(node);
  for (int r = 0; r + 1 < n_; ++r)
    if (multi[r] == 0 || multi[r] == res_ - 1) return true;
  return false;
}

std::vector<int> SphereGrid::multi_index(std::size_t node) const {
  std::vector<int> multi(n_);
  for (int r = n_ - 1; r >= 0; --r) {
    multi[r] = static_cast<int>(node % res_);
    node /= res_;
  }
  return multi;
}

std::size_t SphereGrid::index(std::vector<int> multi) const {
  if (static_cast<int>(multi.size()) != n_) throw DomainError("multi-index length mismatch");
  const int M = res_;
  for (int r = 0; r + 1 < n_; ++r) {
    bool reflected = false;
    if (multi[r] < 0) {
      multi[r] = -1 - multi[r];
      reflected = true;
    } else if (multi[r] >= M) {
      multi[r] = 2 * M - 1 - multi[r];
      reflected = true;
    }
    if (multi[r] < 0 || multi[r] >= M) throw DomainError("stencil reaches beyond one reflection");
    if (reflected) {
      for (int q = r + 1; q + 1 < n_; ++q) multi[q] = M - 1 - multi[q];
      multi[n_ - 1] += M / 2;
    }
  }
  multi[n_ - 1] = ((multi[n_ - 1] % M) + M) % M;
  std::size_t node = 0;
  for (int r = 0; r < n_; ++r) node = node * M + static_cast<std::size_t>(multi[r]);
  return node;
}

// ---------------------------------------------------------------------------
// FrameDifferences

FrameDifferences::FrameDifferences(const SphereGrid& grid, StencilOrder order)
    : grid_(grid), order_(order), n_(grid.dim()) {
  if (order == StencilOrder::fourth) {
    offsets_ = {-2, -1, 1, 2};
    first_ = {1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};
    second_ = {-1.0 / 12.0, 16.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0};
    second_center_ = -30.0 / 12.0;
  } else {
    offsets_ = {-1, 1};
    first_ = {-0.5, 0.5};
    second_ = {1.0, 1.0};
    second_center_ = -2.0;
  }
  const std::size_t D = offsets_.size();
  const std::size_t pairs = static_cast<std::size_t>(n_) * (n_ - 1) / 2;
  stride_ = n_ * D + pairs * D * D;
  nbr_.resize(grid.size() * stride_);

  for (std::size_t node = 0; node < grid.size(); ++node) {
    const std::vector<int> base = grid.multi_index(node);
    std::uint32_t* out = nbr_.data() + node * stride_;
    std::size_t pos = 0;
    for (int r = 0; r < n_; ++r) {
      for (int d : offsets_) {
        auto m = base;
        m[r] += d;
        out[pos++] = static_cast<std::uint32_t>(grid.index(std::move(m)));
      }
    }
    for (int r = 0; r < n_; ++r) {
      for (int s = r + 1; s < n_; ++s) {
        for (int d : offsets_) {
          for (int e : offsets_) {
            auto m = base;
            m[r] += d;
            m[s] += e;
            out[pos++] = static_cast<std::uint32_t>(grid.index(std::move(m)));
          }
        }
      }
    }
  }
}

int FrameDifferences::partial_index(int r, int s) const noexcept {
  return n_ + r * n_ - r * (r - 1) / 2 + (s - r);
}

void FrameDifferences::partials(std::span<const double> u, std::size_t node,
                                std::span<double> out) const {
  const std::uint32_t* nb = neighbors(node);
  const int D = static_cast<int>(offsets_.size());
  const double center = u[node];
  std::size_t pos = 0;
  for (int r = 0; r < n_; ++r) {
    const double h = grid_.spacing(r);
    // Differences against the center keep constants exact (weights sum to 0).
    double d1 = 0.0;
    double d2 = 0.0;
    for (int d = 0; d < D; ++d) {
      const double val = u[nb[pos++]] - center;
      d1 += first_[d] * val;
      d2 += second_[d] * val;
    }
    out[r] = d1 / h;
    out[partial_index(r, r)] = d2 / (h * h);
  }
  for (int r = 0; r < n_; ++r) {
    for (int s = r + 1; s < n_; ++s) {
      double acc = 0.0;
      for (int d = 0; d < D; ++d) {
        double row = 0.0;
        for (int e = 0; e < D; ++e) row += first_[e] * (u[nb[pos++]] - center);
        acc += first_[d] * row;
      }
      out[partial_index(r, s)] = acc / (grid_.spacing(r) * grid_.spacing(s));
    }
  }
}

void FrameDifferences::frame_jet(std::span<const double> u, std::size_t node,
                                 Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
  double P[64];
  partials(u, node, {P, static_cast<std::size_t>(num_partials())});
  grad.resize(n_);
  hess.resize(n_, n_);
  for (int r = 0; r < n_; ++r) grad(r) = P[r] / grid_.scale(node, r);
  for (int r = 0; r < n_; ++r) {
    const double hr = grid_.scale(node, r);
    double diag = P[partial_index(r, r)] / (hr * hr);
    for (int q = 0; q < r; ++q) {
      const double hq = grid_.scale(node, q);
      diag += grid_.cot(node, q) / (hq * hq) * P[q];
    }
    hess(r, r) = diag;
    for (int s = r + 1; s < n_; ++s) {
      const double val =
          (P[partial_index(r, s)] - grid_.cot(node, r) * P[s]) / (hr * grid_.scale(node, s));
      hess(r, s) = val;
      hess(s, r) = val;
    }
  }
}

void FrameDifferences::pull_back(std::size_t node, const Eigen::VectorXd& dgrad,
                                 const Eigen::MatrixXd& dhess, std::span<double> dp) const {
  std::fill(dp.begin(), dp.end(), 0.0);
  for (int r = 0; r < n_; ++r) {
    const double hr = grid_.scale(node, r);
    dp[r] += dgrad(r) / hr;
    dp[partial_index(r, r)] += dhess(r, r) / (hr * hr);
    for (int q = 0; q < r; ++q) {
      const double hq = grid_.scale(node, q);
      dp[q] += dhess(r, r) * grid_.cot(node, q) / (hq * hq);
    }
    for (int s = r + 1; s < n_; ++s) {
      const double c = (dhess(r, s) + dhess(s, r)) / (hr * grid_.scale(node, s));
      dp[partial_index(r, s)] += c;
      dp[s] -= c * grid_.cot(node, r);
    }
  }
}

double FrameDifferences::apply(std::size_t node, std::span<const double> dp,
                               std::span<const double> u) const {
  double total = 0.0;
  scatter(node, dp, [&](std::uint32_t j, double w) { total += w * u[j]; });
  return total;
}

// ---------------------------------------------------------------------------
// Fields and pointwise geometry

RadialField::RadialField(std::shared_ptr<const SphereGrid> g, Eigen::VectorXd values)
    : grid(std::move(g)), u(std::move(values)) {
  if (!grid) throw DomainError("radial field needs a grid");
  if (static_cast<std::size_t>(u.size()) != grid->size()) {
    throw DomainError("field has " + std::to_string(u.size()) + " values, grid has " +
                      std::to_string(grid->size()) + " nodes");
  }
  if (!u.allFinite()) throw DomainError("radial field contains non-finite values");
}

RadialField RadialField::constant(std::shared_ptr<const SphereGrid> g, double value) {
  const auto size = static_cast<Eigen::Index>(g ? g->size() : 0);
  return RadialField(std::move(g), Eigen::VectorXd::Constant(size, value));
}

FrameJet frame_derivatives(const RadialField& field, std::size_t node) {
  FrameJet jet;
  field.grid->differences().frame_jet({field.u.data(), field.size()}, node, jet.grad, jet.hess);
  return jet;
}

namespace {

struct Metric {
  double v;
  Eigen::MatrixXd gbar;
  Eigen::MatrixXd hbar;
};

Metric metric(const Eigen::VectorXd& g, const Eigen::MatrixXd& H) {
  const int n = static_cast<int>(g.size());
  const double v = std::sqrt(1.0 + g.squaredNorm());
  const Eigen::MatrixXd ggT = g * g.transpose();
  Metric m{v, Eigen::MatrixXd::Identity(n, n) - ggT / (v * (1.0 + v)),
           Eigen::MatrixXd::Identity(n, n) + ggT + 0.5 * (H + H.transpose())};
  return m;
}

}  // namespace

SymMatrix shape_matrix(const Eigen::VectorXd& grad_u, const Eigen::MatrixXd& hess_u) {
  if (hess_u.rows() != grad_u.size() || hess_u.cols() != grad_u.size()) {
    throw DomainError("shape_matrix: gradient and Hessian sizes differ");
  }
  const Metric m = metric(grad_u, hess_u);
  return SymMatrix::from_dense(m.gbar * m.hbar * m.gbar);
}

ShapePullback shape_matrix_pullback(const Eigen::VectorXd& g, const Eigen::MatrixXd& H,
                                    const Eigen::MatrixXd& weight) {
  const Metric m = metric(g, H);
  const double v = m.v;
  const double beta = 1.0 / (v * (1.0 + v));
  const double dbeta = -(1.0 + 2.0 * v) / (v * v * (1.0 + v) * (1.0 + v));
  ShapePullback out;
  out.dhess = m.gbar * weight * m.gbar;
  const Eigen::MatrixXd M = weight * m.gbar * m.hbar;
  const double gMg = g.dot(M * g);
  out.dgrad = -2.0 * dbeta / v * gMg * g - 2.0 * beta * (M + M.transpose()) * g +
              2.0 * out.dhess * g;
  return out;
}

double support_function(double rho, const Eigen::VectorXd& grad_rho) {
  if (!(rho > 0.0)) throw DomainError("support_function needs rho > 0");
  return rho * rho / std::sqrt(rho * rho + grad_rho.squaredNorm());
}

GeometryPoint geometry_point(const RadialField& field, std::size_t node) {
  GeometryPoint pt;
  const FrameJet jet = frame_derivatives(field, node);
  pt.rho = field.rho(node);
  pt.grad_u = jet.grad;
  pt.hess_u = jet.hess;
  pt.a = shape_matrix(jet.grad, jet.hess);
  pt.kappa_a = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(pt.a.dense(),
                                                              Eigen::EigenvaluesOnly)
                   .eigenvalues();
  pt.v = std::sqrt(1.0 + jet.grad.squaredNorm());
  pt.support = pt.rho / pt.v;
  return pt;
}

EmbeddedPoint embed_point(const RadialField& field, std::size_t node) {
  const SphereGrid& grid = *field.grid;
  const int n = grid.dim();
  const FrameJet jet = frame_derivatives(field, node);
  const double rho = field.rho(node);
  const Eigen::VectorXd Drho = -rho * jet.grad;
  const Eigen::MatrixXd D2rho = rho * (jet.grad * jet.grad.transpose() - jet.hess);
  const double v = std::sqrt(1.0 + jet.grad.squaredNorm());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd x = grid.point(node);

  EmbeddedPoint e;
  e.X = rho * x;
  e.nu = (x + grid.frame(node) * jet.grad) / v;
  e.g = rho * rho * I + Drho * Drho.transpose();
  e.h = (-D2rho + rho * I + 2.0 / rho * Drho * Drho.transpose()) / v;
  e.h = 0.5 * (e.h + e.h.transpose());
  return e;
}

std::vector<EmbeddedPoint> embed(const RadialField& field) {
  std::vector<EmbeddedPoint> out;
  out.reserve(field.size());
  for (std::size_t node = 0; node < field.size(); ++node) out.push_back(embed_point(field, node));
  return out;
}

Eigen::VectorXd principal_curvatures_from_forms(const Eigen::MatrixXd& g,
                                                const Eigen::MatrixXd& h) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(h, g, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw DomainError("first fundamental form not positive definite");
  return eig.eigenvalues();
}

double codazzi_residual(const RadialField& field) {
  const SphereGrid& grid = *field.grid;
  const int n = grid.dim();
  const int M = grid.resolution();
  if (M < 8) throw DomainError("Codazzi diagnostic needs resolution >= 8");

  // Coordinate components of g and h at every node.
  std::vector<Eigen::MatrixXd> G(grid.size()), H(grid.size());
  for (std::size_t node = 0; node < grid.size(); ++node) {
    const EmbeddedPoint e = embed_point(field, node);
    Eigen::VectorXd s(n);
    for (int r = 0; r < n; ++r) s(r) = grid.scale(node, r);
    G[node] = s.asDiagonal() * e.g * s.asDiagonal();
    H[node] = s.asDiagonal() * e.h * s.asDiagonal();
  }

  const double w[4] = {1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};
  const int off[4] = {-2, -1, 1, 2};
  double worst = 0.0;
  for (std::size_t node = 0; node < grid.size(); ++node) {
    const auto base = grid.multi_index(node);
    bool interior = true;
    for (int r = 0; r + 1 < n; ++r) interior = interior && base[r] >= 2 && base[r] <= M - 3;
    if (!interior) continue;

    std::vector<Eigen::MatrixXd> dG(n, Eigen::MatrixXd::Zero(n, n));
    std::vector<Eigen::MatrixXd> dH(n, Eigen::MatrixXd::Zero(n, n));
    for (int k = 0; k < n; ++k) {
      for (int t = 0; t < 4; ++t) {
        auto m = base;
        m[k] += off[t];
        const std::size_t nb = grid.index(std::move(m));
        dG[k] += w[t] * G[nb];
        dH[k] += w[t] * H[nb];
      }
      dG[k] /= grid.spacing(k);
      dH[k] /= grid.spacing(k);
    }
    const Eigen::MatrixXd Ginv = G[node].inverse();
    // Gamma[m](k, i) = Gamma^m_{ki}
    std::vector<Eigen::MatrixXd> Gamma(n, Eigen::MatrixXd::Zero(n, n));
    for (int m = 0; m < n; ++m)
      for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i) {
          double acc = 0.0;
          for (int l = 0; l < n; ++l)
            acc += Ginv(m, l) * (dG[k](i, l) + dG[i](k, l) - dG[l](k, i));
          Gamma[m](k, i) = 0.5 * acc;
        }
    const Eigen::MatrixXd& h = H[node];
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double c = dH[k](i, j) - dH[j](i, k);
          for (int m = 0; m < n; ++m) c += -Gamma[m](k, i) * h(m, j) + Gamma[m](j, i) * h(m, k);
          worst = std::max(worst, std::abs(c));
        }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Ellipsoid-like test surface

std::pair<double, double> revolution_curvatures(double theta, double eps) {
  const double c = std::cos(theta), s = std::sin(theta);
  const double w = 1.0 + eps * c * c;
  const double rho = 1.0 / std::sqrt(w);
  const double d1 = eps * c * s * std::pow(w, -1.5);
  const double d2 = eps * std::cos(2 * theta) * std::pow(w, -1.5) +
                    3.0 * eps * eps * c * c * s * s * std::pow(w, -2.5);
  const double norm = std::sqrt(rho * rho + d1 * d1);
  const double km = (rho * rho + 2 * d1 * d1 - rho * d2) / (norm * norm * norm);
  const double kp = std::abs(s) < 1e-10 ? km : (rho * s - d1 * c) / (norm * rho * s);
  return {km, kp};
}

double ellipsoid_curvature_error(int n, int resolution, const Eigen::VectorXd& axis, double eps) {
  if (axis.size() != n + 1) throw DomainError("axis must have n + 1 components");
  auto grid = SphereGrid::create(n, resolution);
  Eigen::VectorXd u(static_cast<Eigen::Index>(grid->size()));
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const double t = grid->point(i).dot(axis);
    u(static_cast<Eigen::Index>(i)) = 0.5 * std::log(1.0 + eps * t * t);
  }
  const RadialField f(grid, u);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const GeometryPoint pt = geometry_point(f, i);
    Eigen::VectorXd kappa = pt.principal_curvatures();
    std::sort(kappa.data(), kappa.data() + kappa.size());
    const double theta = std::acos(std::clamp(grid->point(i).dot(axis), -1.0, 1.0));
    const auto [km, kp] = revolution_curvatures(theta, eps);
    Eigen::VectorXd ref = Eigen::VectorXd::Constant(n, kp);
    ref(0) = km;
    std::sort(ref.data(), ref.data() + ref.size());
    worst = std::max(worst, (kappa - ref).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace pkcurv

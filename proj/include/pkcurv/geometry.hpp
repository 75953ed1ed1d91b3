#pragma once

// Radial graphs X = rho(x) x over S^n on a tensor-product angular grid.
//
// Angular coordinates: n-1 polar angles in (0, pi) and one azimuth in
// [0, 2 pi). Polar nodes sit at cell midpoints, so no node lies on a pole;
// stencils that leave the chart are folded back through the sphere's
// reflection symmetry (x_r -> -x_r, later polar angles -> pi - x, azimuth
// -> azimuth + pi). All tensors are expressed in the orthonormal frame
// e_r = h_r^{-1} d/dx_r of the round metric.

#include "pkcurv/exterior.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace pkcurv {

enum class StencilOrder { second = 2, fourth = 4 };

class SphereGrid;

/// Finite-difference coordinate partials and their conversion to frame
/// derivatives. Partials are ordered [u_1..u_n, u_11, u_12, .., u_1n, u_22, ..].
class FrameDifferences {
 public:
  FrameDifferences(const SphereGrid& grid, StencilOrder order);

  StencilOrder order() const noexcept { return order_; }
  int num_partials() const noexcept { return n_ + n_ * (n_ + 1) / 2; }

  void partials(std::span<const double> u, std::size_t node, std::span<double> out) const;

  /// Frame gradient and covariant Hessian of u at node.
  void frame_jet(std::span<const double> u, std::size_t node, Eigen::VectorXd& grad,
                 Eigen::MatrixXd& hess) const;

  /// Given d/dgrad (length n) and the symmetric coefficient C of
  /// d/dhess (so that dR = dg . dgrad + tr(C dhess)), returns d/dpartials.
  void pull_back(std::size_t node, const Eigen::VectorXd& dgrad, const Eigen::MatrixXd& dhess,
                 std::span<double> dpartials) const;

  /// Calls add(neighbor, weight) for every stencil entry of
  /// sum_q dpartials[q] * partial_q, the center included.
  template <class Add>
  void scatter(std::size_t node, std::span<const double> dpartials, Add&& add) const;

  /// Applies sum_q dpartials[q] * partial_q(u) at node.
  double apply(std::size_t node, std::span<const double> dpartials,
               std::span<const double> u) const;

 private:
  int partial_index(int r, int s) const noexcept;  // r <= s, second partial
  const std::uint32_t* neighbors(std::size_t node) const noexcept {
    return nbr_.data() + node * stride_;
  }

  const SphereGrid& grid_;
  StencilOrder order_;
  int n_;
  std::vector<int> offsets_;     // nonzero stencil offsets
  std::vector<double> first_;    // first-derivative weights per offset (unit spacing)
  std::vector<double> second_;   // second-derivative weights per offset
  double second_center_ = 0.0;
  std::size_t stride_ = 0;
  std::vector<std::uint32_t> nbr_;
};

/// Tensor-product angular grid on S^n with `resolution` nodes per angular
/// coordinate (resolution even, >= 4). Shared through std::shared_ptr.
class SphereGrid {
 public:
  static std::shared_ptr<const SphereGrid> create(int n, int resolution);

  SphereGrid(const SphereGrid&) = delete;
  SphereGrid& operator=(const SphereGrid&) = delete;

  int dim() const noexcept { return n_; }
  int resolution() const noexcept { return res_; }
  std::size_t size() const noexcept { return size_; }
  double spacing(int axis) const noexcept;

  std::span<const double> angles(std::size_t node) const noexcept {
    return {angles_.data() + node * n_, static_cast<std::size_t>(n_)};
  }
  /// Frame scale h_r = prod_{q<r} sin x_q.
  double scale(std::size_t node, int r) const noexcept { return scale_[node * n_ + r]; }
  /// cot x_q for polar axes q < n-1.
  double cot(std::size_t node, int q) const noexcept { return cot_[node * n_ + q]; }

  /// Unit vector in R^{n+1}.
  Eigen::VectorXd point(std::size_t node) const;
  /// (n+1) x n matrix whose columns are the orthonormal frame vectors.
  Eigen::MatrixXd frame(std::size_t node) const;

  /// Exact cell areas; they sum to |S^n|.
  const std::vector<double>& weights() const noexcept { return weights_; }
  static double sphere_area(int n);

  /// True when the node lies in the first or last row of a polar angle.
  bool pole_adjacent(std::size_t node) const;

  std::vector<int> multi_index(std::size_t node) const;
  /// Node index of a multi-index that may leave the chart by reflection.
  std::size_t index(std::vector<int> multi) const;

  const FrameDifferences& differences() const noexcept { return *fourth_; }
  const FrameDifferences& differences(StencilOrder order) const noexcept {
    return order == StencilOrder::fourth ? *fourth_ : *second_;
  }

 private:
  SphereGrid(int n, int resolution);

  int n_;
  int res_;
  std::size_t size_;
  std::vector<double> angles_;
  std::vector<double> scale_;
  std::vector<double> cot_;
  std::vector<double> weights_;
  std::unique_ptr<FrameDifferences> fourth_;
  std::unique_ptr<FrameDifferences> second_;
};

/// u = -log rho sampled on a grid.
struct RadialField {
  std::shared_ptr<const SphereGrid> grid;
  Eigen::VectorXd u;

  RadialField() = default;
  RadialField(std::shared_ptr<const SphereGrid> g, Eigen::VectorXd values);
  static RadialField constant(std::shared_ptr<const SphereGrid> g, double value);

  std::size_t size() const noexcept { return static_cast<std::size_t>(u.size()); }
  double rho(std::size_t node) const { return std::exp(-u(static_cast<Eigen::Index>(node))); }
};

struct FrameJet {
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

struct GeometryPoint {
  double rho = 0.0;
  Eigen::VectorXd grad_u;
  Eigen::MatrixXd hess_u;
  SymMatrix a;
  Eigen::VectorXd kappa_a;
  double support = 0.0;
  double v = 1.0;

  /// Principal curvatures kappa_a / (rho v).
  Eigen::VectorXd principal_curvatures() const { return kappa_a / (rho * v); }
};

FrameJet frame_derivatives(const RadialField& field, std::size_t node);

/// a = gbar (I + grad grad^T + hess) gbar with
/// gbar = I - grad grad^T / (v (1 + v)), v = sqrt(1 + |grad|^2).
SymMatrix shape_matrix(const Eigen::VectorXd& grad_u, const Eigen::MatrixXd& hess_u);

/// Derivatives of tr(G a(grad, hess)) for a fixed symmetric weight G:
/// returns (d/dgrad, C) with d tr(G a) = d/dgrad . dgrad + tr(C dhess).
struct ShapePullback {
  Eigen::VectorXd dgrad;
  Eigen::MatrixXd dhess;
};
ShapePullback shape_matrix_pullback(const Eigen::VectorXd& grad_u, const Eigen::MatrixXd& hess_u,
                                    const Eigen::MatrixXd& weight);

/// <X, nu> = rho^2 (rho^2 + |grad rho|^2)^{-1/2}.
double support_function(double rho, const Eigen::VectorXd& grad_rho);

GeometryPoint geometry_point(const RadialField& field, std::size_t node);

/// Position, normal and fundamental forms (frame components).
struct EmbeddedPoint {
  Eigen::VectorXd X;
  Eigen::VectorXd nu;
  Eigen::MatrixXd g;
  Eigen::MatrixXd h;
};

EmbeddedPoint embed_point(const RadialField& field, std::size_t node);
std::vector<EmbeddedPoint> embed(const RadialField& field);

/// Principal curvatures from det(h - kappa g) = 0, ascending.
Eigen::VectorXd principal_curvatures_from_forms(const Eigen::MatrixXd& g, const Eigen::MatrixXd& h);

/// Max |h_ij;k - h_ik;j| over nodes at least two rows away from every pole,
/// with coordinate derivatives by centered differences.
double codazzi_residual(const RadialField& field);

/// Principal curvatures (meridian, parallel) of the surface of revolution
/// rho = (1 + eps cos^2 theta)^{-1/2}, theta measured from the axis.
std::pair<double, double> revolution_curvatures(double theta, double eps);

/// Max principal-curvature error of the discrete geometry for that surface
/// about a unit axis in R^{n+1}.
double ellipsoid_curvature_error(int n, int resolution, const Eigen::VectorXd& axis,
                                 double eps = 0.3);

// ---------------------------------------------------------------------------

template <class Add>
void FrameDifferences::scatter(std::size_t node, std::span<const double> dp, Add&& add) const {
  const std::uint32_t* nb = neighbors(node);
  const int D = static_cast<int>(offsets_.size());
  double center = 0.0;
  std::size_t pos = 0;
  for (int r = 0; r < n_; ++r) {
    const double h = grid_.spacing(r);
    const double c1 = dp[r] / h;
    const double c2 = dp[partial_index(r, r)] / (h * h);
    center += c2 * second_center_;
    for (int d = 0; d < D; ++d) add(nb[pos++], c1 * first_[d] + c2 * second_[d]);
  }
  for (int r = 0; r < n_; ++r) {
    for (int s = r + 1; s < n_; ++s) {
      const double c = dp[partial_index(r, s)] / (grid_.spacing(r) * grid_.spacing(s));
      for (int d = 0; d < D; ++d)
        for (int e = 0; e < D; ++e) add(nb[pos++], c * first_[d] * first_[e]);
    }
  }
  add(static_cast<std::uint32_t>(node), center);
}

}  // namespace pkcurv

#include "pkcurv/errors.hpp"
#include "pkcurv/verify.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>

namespace py = pybind11;
using namespace pkcurv;

namespace {

SolverConfig config_from(const py::dict& d) {
  SolverConfig c;
  for (const auto& [key_obj, value] : d) {
    const std::string key = py::str(key_obj);
    if (key == "newton_tol") {
      c.newton_tol = value.cast<double>();
    } else if (key == "max_newton") {
      c.max_newton = value.cast<int>();
    } else if (key == "t_steps") {
      if (py::isinstance<py::int_>(value)) {
        c.t_steps = SolverConfig::uniform_schedule(value.cast<int>());
      } else {
        c.t_steps = value.cast<std::vector<double>>();
      }
    } else if (key == "eps_schedule") {
      c.eps_schedule = value.cast<std::vector<double>>();
    } else if (key == "jacobian") {
      const std::string j = value.cast<std::string>();
      if (j == "exact") c.jacobian = JacobianPolicy::exact;
      else if (j == "frozen") c.jacobian = JacobianPolicy::frozen;
      else if (j == "auto") c.jacobian = JacobianPolicy::automatic;
      else throw ConfigError("jacobian must be exact, frozen or auto");
    } else if (key == "linear_solver") {
      const std::string s = value.cast<std::string>();
      if (s == "direct") c.linear_solver = LinearSolverKind::direct;
      else if (s == "iterative") c.linear_solver = LinearSolverKind::iterative;
      else if (s == "auto") c.linear_solver = LinearSolverKind::automatic;
      else throw ConfigError("linear_solver must be direct, iterative or auto");
    } else if (key == "verbose") {
      c.verbose = value.cast<bool>();
    } else {
      throw ConfigError("unknown solver option '" + key + "'");
    }
  }
  c.validate();
  return c;
}

py::tuple run(const std::string& problem_json, int res, const py::dict& options, bool homogeneous) {
  const ProblemSpec spec = ProblemSpec::from_json(nlohmann::json::parse(problem_json));
  const SolverConfig config = config_from(options);
  SolveReport rep;
  {
    py::gil_scoped_release release;
    const auto grid = SphereGrid::create(spec.n, res);
    rep = homogeneous ? homogeneous_solve(spec, grid, config) : continuation_solve(spec, grid, config);
  }
  nlohmann::json audits = to_json(run_solution_audits(rep, spec));
  return py::make_tuple(rep.to_json().dump(), audits.dump(), rep.u_final.u);
}

}  // namespace

PYBIND11_MODULE(_pkcurv, m) {
  m.doc() = "Prescribed (p,k)-curvature solver core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConeViolation>(m, "ConeViolation", PyExc_ArithmeticError);

  m.def("sigma", &sigma, py::arg("k"), py::arg("lam"));
  m.def("quotient_root", &quotient_root, py::arg("k"), py::arg("l"), py::arg("lam"));
  m.def(
      "lambda_of",
      [](const Eigen::VectorXd& kappa, int p) {
        return lambda_of(kappa, *build_table(static_cast<int>(kappa.size()), p));
      },
      py::arg("kappa"), py::arg("p"));
  m.def(
      "F_and_gradient",
      [](const Eigen::MatrixXd& a, int p, int k, int l) {
        const auto table = build_table(static_cast<int>(a.rows()), p);
        const CurvaturePoint pt = F_and_gradient(SymMatrix::from_dense(a), p, k, l, table);
        return py::make_tuple(pt.F, pt.F_grad.dense(), pt.kappa);
      },
      py::arg("a"), py::arg("p"), py::arg("k"), py::arg("l"));

  m.def(
      "solve",
      [](const std::string& problem, int res, const py::dict& options) {
        return run(problem, res, options, false);
      },
      py::arg("problem"), py::arg("res"), py::arg("options") = py::dict());
  m.def(
      "homogeneous",
      [](const std::string& problem, int res, const py::dict& options) {
        return run(problem, res, options, true);
      },
      py::arg("problem"), py::arg("res"), py::arg("options") = py::dict());

  m.def(
      "verify",
      [](int trials, std::uint64_t seed, const std::string& suite) {
        std::vector<PropertyReport> reports;
        {
          py::gil_scoped_release release;
          if (suite != "exterior") reports = run_symfun_suite(trials, seed);
          if (suite != "symfun") {
            const auto e = run_exterior_suite(trials, seed);
            reports.insert(reports.end(), e.begin(), e.end());
          }
        }
        return to_json(reports).dump();
      },
      py::arg("trials") = 1000, py::arg("seed") = 7, py::arg("suite") = "all");

  m.def(
      "ellipsoid_curvature_error",
      [](int n, int res, const Eigen::VectorXd& axis, double eps) {
        return ellipsoid_curvature_error(n, res, axis, eps);
      },
      py::arg("n"), py::arg("res"), py::arg("axis"), py::arg("eps") = 0.3);
}

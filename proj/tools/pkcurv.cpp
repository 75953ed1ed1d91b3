// pkcurv: solve, verify and audit prescribed curvature problems.

#include "pkcurv/errors.hpp"
#include "pkcurv/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace pkcurv;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNotConverged = 2;

struct Options {
  std::string problem;
  int res = 32;
  std::string out = "pkcurv_out";
  double tol = 0.0;
  int t_steps = 0;
  std::string eps_schedule;
  std::string jacobian;
  std::uint64_t seed = 7;
  int trials = 1000;
  std::string suite = "all";
  std::string field;
  bool verbose = false;
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos) {
      throw ConfigError("bad number '" + item + "' in --eps-schedule");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--eps-schedule is empty");
  return out;
}

SolverConfig solver_config(const Options& o) {
  SolverConfig c;
  if (o.tol > 0.0) c.newton_tol = o.tol;
  if (o.t_steps > 0) c.t_steps = SolverConfig::uniform_schedule(o.t_steps);
  if (!o.eps_schedule.empty()) c.eps_schedule = parse_list(o.eps_schedule);
  if (o.jacobian == "exact") c.jacobian = JacobianPolicy::exact;
  if (o.jacobian == "frozen") c.jacobian = JacobianPolicy::frozen;
  c.verbose = o.verbose;
  c.validate();
  return c;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

int run_solve(const Options& o, bool homogeneous) {
  const ProblemSpec spec = ProblemSpec::load(o.problem);
  const bool is_homogeneous = spec.regime() == ProblemSpec::Regime::homogeneous;
  if (homogeneous != is_homogeneous) {
    throw ConfigError(is_homogeneous ? "-b-q-k+l = 0: use the homogeneous subcommand"
                                     : "-b-q-k+l > 0: use the solve subcommand");
  }
  const SolverConfig config = solver_config(o);
  const auto grid = SphereGrid::create(spec.n, o.res);

  const SolveReport rep =
      homogeneous ? homogeneous_solve(spec, grid, config) : continuation_solve(spec, grid, config);
  print_warnings(rep.warnings);

  const Residual final_res = CurvatureEquation(spec, grid).evaluate(rep.u_final);
  if (!final_res.admissible()) {
    std::cerr << "error: final field leaves the cone at " << final_res.violations
              << " nodes; nothing written\n";
    return kNotConverged;
  }

  const fs::path out(o.out);
  fs::create_directories(out);
  const auto audits = run_solution_audits(rep, spec);
  write_json(out / "report.json", rep.to_json());
  write_json(out / "audits.json", to_json(audits));
  rep.write_solution_csv(out / "solution.csv");
  rep.write_trace_csv(out / "trace.csv");

  const nlohmann::json j = rep.to_json();
  std::cout << (rep.converged ? "converged" : "not converged") << ": " << rep.message << '\n';
  std::cout << "rho in [" << j["min_rho"].dump() << ", " << j["max_rho"].dump() << "]\n";
  if (rep.gamma) {
    std::cout << "gamma " << j["gamma"].dump();
    if (rep.gamma_newton) std::cout << " (limit Newton " << j["gamma_newton"].dump() << ")";
    std::cout << (rep.gamma_cauchy ? "" : ", samples not Cauchy") << '\n';
  }
  std::cout << "residual " << j["residual"].dump() << ", audits "
            << (all_pass(audits) ? "pass" : "FAIL") << '\n';
  std::cout << "wrote " << out.string() << '\n';
  return rep.converged ? kOk : kNotConverged;
}

int run_verify(const Options& o) {
  if (o.suite != "all" && o.suite != "symfun" && o.suite != "exterior") {
    throw ConfigError("--suite must be all, symfun or exterior");
  }
  std::vector<PropertyReport> reports;
  SuiteOptions opts;
  opts.trials = o.trials;
  opts.seed = o.seed;
  if (o.suite != "exterior") {
    const auto s = run_symfun_suite(opts);
    reports.insert(reports.end(), s.begin(), s.end());
  }
  if (o.suite != "symfun") {
    const auto e = run_exterior_suite(opts);
    reports.insert(reports.end(), e.begin(), e.end());
  }
  print_table(std::cout, reports);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_json(fs::path(o.out) / "verify.json", to_json(reports));
  }
  const bool ok = all_pass(reports);
  std::cout << (ok ? "all properties pass" : "some properties FAIL") << '\n';
  return ok ? kOk : kNotConverged;
}

// Reads the u column of a solution CSV written by solve.
Eigen::VectorXd read_field(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open field file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::size_t column = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == "u") column = i;
  if (column == header.size()) throw ConfigError(path.string() + ": no 'u' column");

  std::vector<double> values;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t i = 0; i <= column; ++i) {
      if (!std::getline(ss, cell, ',')) {
        throw ConfigError(path.string() + ":" + std::to_string(row) + ": too few columns");
      }
    }
    try {
      values.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ":" + std::to_string(row) + ": bad value '" + cell + "'");
    }
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

int run_audit(const Options& o) {
  if (o.field.empty()) throw ConfigError("audit needs --field");
  const ProblemSpec spec = ProblemSpec::load(o.problem);
  const Eigen::VectorXd u = read_field(o.field);
  const int res = static_cast<int>(std::lround(std::pow(static_cast<double>(u.size()), 1.0 / spec.n)));
  const auto grid = SphereGrid::create(spec.n, res);
  if (static_cast<Eigen::Index>(grid->size()) != u.size()) {
    throw ConfigError(std::to_string(u.size()) + " values do not fill an n = " +
                      std::to_string(spec.n) + " grid");
  }

  SolveReport rep;
  rep.spec = spec;
  rep.u_final = RadialField(grid, u);
  rep.converged = true;
  if (spec.regime() == ProblemSpec::Regime::homogeneous) {
    // Best constant gamma for the stored shape.
    const Residual r = homogeneous_residual(rep.u_final, spec, 1.0);
    const Eigen::VectorXd rhs = r.F_vals - r.r;
    const double g = r.F_vals.dot(rhs) / rhs.squaredNorm();
    rep.gamma = g;
    rep.gamma_newton = g;
  }
  const auto audits = run_solution_audits(rep, spec);
  print_table(std::cout, audits);
  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "audits.json", to_json(audits));
  return all_pass(audits) ? kOk : kNotConverged;
}

int run_geometry_check(const Options& o) {
  const std::vector<int> levels{16, 32, 64};
  Eigen::VectorXd axis = Eigen::VectorXd::Zero(3);
  axis(0) = 1.0;
  std::vector<double> errors;
  nlohmann::json j = nlohmann::json::array();
  bool ok = true;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    errors.push_back(ellipsoid_curvature_error(2, levels[i], axis));
    nlohmann::json row{{"resolution", levels[i]}, {"max_error", errors.back()}};
    std::cout << "res " << levels[i] << "  error " << nlohmann::json(errors.back()).dump();
    if (i > 0) {
      const double order = std::log2(errors[i - 1] / errors[i]);
      row["order"] = order;
      ok = ok && order >= 1.9;
      std::cout << "  order " << nlohmann::json(order).dump();
    }
    std::cout << '\n';
    j.push_back(row);
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_json(fs::path(o.out) / "geometry.json", j);
  }
  return ok ? kOk : kNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prescribed (p,k)-curvature solver"};
  app.require_subcommand(1);
  Options o;

  auto add_solver_flags = [&](CLI::App* sub) {
    sub->add_option("--problem", o.problem, "problem JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--res", o.res, "points per angle")->check(CLI::Range(16, 128));
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--tol", o.tol, "Newton residual tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--t-steps", o.t_steps, "uniform continuation points")->check(CLI::Range(2, 100000));
    sub->add_option("--eps-schedule", o.eps_schedule, "decreasing epsilons, comma separated");
    sub->add_option("--jacobian", o.jacobian, "Jacobian policy")
        ->check(CLI::IsMember({"exact", "frozen", "auto"}));
    sub->add_flag("-v,--verbose", o.verbose, "progress on stderr");
  };

  auto* solve = app.add_subcommand("solve", "continuation solve, -b-q-k+l > 0");
  add_solver_flags(solve);
  auto* homogeneous = app.add_subcommand("homogeneous", "eigenvalue problem, -b-q-k+l = 0");
  add_solver_flags(homogeneous);

  auto* verify = app.add_subcommand("verify", "randomized property suites");
  verify->add_option("--trials", o.trials, "trials per property")->check(CLI::Range(1, 10000000));
  verify->add_option("--seed", o.seed, "random seed");
  verify->add_option("--suite", o.suite, "all, symfun or exterior");
  verify->add_option("--out", o.out, "directory for verify.json");

  auto* audit = app.add_subcommand("audit", "audit a stored solution");
  audit->add_option("--problem", o.problem, "problem JSON")->required()->check(CLI::ExistingFile);
  audit->add_option("--field", o.field, "solution CSV with a u column")->required()->check(CLI::ExistingFile);
  audit->add_option("--out", o.out, "output directory");

  auto* geometry = app.add_subcommand("geometry-check", "curvature convergence on an ellipsoid-like surface");
  geometry->add_option("--out", o.out, "directory for geometry.json");

  // verify and geometry-check write nothing unless --out is given.
  verify->preparse_callback([&](std::size_t) { o.out.clear(); });
  geometry->preparse_callback([&](std::size_t) { o.out.clear(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*solve) return run_solve(o, false);
    if (*homogeneous) return run_solve(o, true);
    if (*verify) return run_verify(o);
    if (*audit) return run_audit(o);
    if (*geometry) return run_geometry_check(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

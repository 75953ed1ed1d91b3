#pragma once

// Randomized property checks for the symmetric-function and exterior
// algebra, and audits of solved fields.

#include "pkcurv/solver.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pkcurv {

/// Outcome of one property. Inequalities are written expression >= 0 and
/// worst_slack is the smallest normalized value seen.
struct PropertyReport {
  std::string name;
  int trials = 0;
  double worst_slack = 0.0;
  double tolerance = 0.0;
  bool pass = true;          // worst_slack >= -tolerance
  std::uint64_t seed = 0;
  bool applicable = true;
  double acceptance_rate = 1.0;  // cone rejection sampling
  std::string detail;

  nlohmann::json to_json() const;
};

struct SuiteOptions {
  int trials = 1000;
  std::uint64_t seed = 7;
  int min_n = 3;
  int max_n = 6;
  int max_N = 20;  // largest C(n, p) in the exterior sweep
};

/// Identities and inequalities for sigma_k and the Hessian quotients.
std::vector<PropertyReport> run_symfun_suite(int trials, std::uint64_t seed);
std::vector<PropertyReport> run_symfun_suite(const SuiteOptions& options);

/// Derivation matrix, Lambda map and the quotient operator on matrices;
/// trials cycle through every (n, p, k, l) with min_n <= n <= max_n,
/// C(n, p) <= max_N and 0 <= l < k <= C(n, p).
std::vector<PropertyReport> run_exterior_suite(int trials, std::uint64_t seed);
std::vector<PropertyReport> run_exterior_suite(const SuiteOptions& options);

/// The same checks for a single (n, p, k, l).
std::vector<PropertyReport> run_exterior_suite(int n, int p, int k, int l, int trials,
                                               std::uint64_t seed);

/// Residual, C^0 containment, gradient finiteness, cone margins,
/// certificate consistency and the dilation law on a solved field. When the
/// residual check fails the others are marked not applicable.
std::vector<PropertyReport> run_solution_audits(const SolveReport& report, const ProblemSpec& spec);

bool all_pass(const std::vector<PropertyReport>& reports);
nlohmann::json to_json(const std::vector<PropertyReport>& reports);
void print_table(std::ostream& os, const std::vector<PropertyReport>& reports);

}  // namespace pkcurv

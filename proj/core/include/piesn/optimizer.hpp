#pragma once

#include <functional>
#include <string>
#include <vector>

#include "piesn/types.hpp"

namespace piesn {

struct LbfgsConfig {
  int memory_pairs = 10;
  int max_iterations = 500;
  double grad_tolerance = 1e-8;  // infinity norm
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_search_steps = 50;
};

enum class TerminationReason { gradient_tol, max_iter, line_search_failure };
std::string to_string(TerminationReason r);

struct IterationRecord {
  double objective;
  double grad_inf_norm;
  double step_length;
  // Directional derivatives phi'(0) and phi'(alpha) of the line search,
  // stored so the strong Wolfe conditions can be asserted from the trace.
  double dir_deriv_start = 0.0;
  double dir_deriv_end = 0.0;
};

struct OptimizationTrace {
  // iterations[0] is the starting point (step_length 0), then one record per
  // accepted L-BFGS step.
  std::vector<IterationRecord> iterations;
  TerminationReason termination = TerminationReason::max_iter;
};

// Evaluates the objective at x and fills grad (same size as x).
using Objective = std::function<double(const Vec& x, Vec& grad)>;

struct MinimizeResult {
  Vec x;
  double objective = 0.0;
  OptimizationTrace trace;
};

// Two-loop recursion L-BFGS with a strong-Wolfe line search. `on_accept` is
// invoked with every accepted iterate (including the final one).
MinimizeResult minimize(
    const Objective& objective, const Vec& x0, const LbfgsConfig& cfg = {},
    const std::function<void(const Vec&, double)>& on_accept = {});

// Central finite differences against the analytic gradient; per coordinate up
// to `dim_limit`, otherwise along seeded random unit directions. Returns the
// maximum relative discrepancy.
double check_gradient(const Objective& objective, const Vec& x, double step,
                      int dim_limit = 256, int n_directions = 64);

}  // namespace piesn

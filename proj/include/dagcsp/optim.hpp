#pragma once

#include "dagcsp/domains.hpp"

#include <cstdint>
#include <functional>
#include <limits>

namespace dagcsp {

struct NlpResult {
  Vec x_star;
  double f_star = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Returns f(x) and fills grad (same length as x).
using ObjFn = std::function<double(const Vec& x, Vec& grad)>;

// Fills residual vector r(x) and its Jacobian J (r.size() x x.size()).
using ResidualFn = std::function<void(const Vec& x, Vec& r, Mat& J)>;

// Projected-gradient L-BFGS (memory 10) with a strong-Wolfe backtracking line
// search on the projected path. Convergence test: ||P(x - grad) - x||_inf <= tol.
// Iteration exhaustion returns converged = false; it is not an error.
// stop_below: return as soon as an iterate attains f <= stop_below (used by
// feasibility-style solves that only need to certify a threshold).
NlpResult box_minimize(const ObjFn& objective, const Box& box, const Vec& x0,
                       double tol = 1e-8, int max_iter = 200,
                       double stop_below = -std::numeric_limits<double>::infinity());

// box_minimize from n_starts Sobol points of the box (sequence offset by
// `seed`); returns the best f_star, ties to the lowest start index.
NlpResult multistart_minimize(const ObjFn& objective, const Box& box, int n_starts = 10,
                              std::uint64_t seed = 0, double tol = 1e-8,
                              int max_iter = 200,
                              double stop_below = -std::numeric_limits<double>::infinity());

// f(x) + weight * ||r(x)||^2 with the gradient composed via the chain rule.
ObjFn penalty_objective(ObjFn base, ResidualFn residuals, double weight = 1e3);

}  // namespace dagcsp

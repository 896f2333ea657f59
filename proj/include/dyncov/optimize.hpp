#pragma once

#include <functional>
#include <vector>

#include "dyncov/mvstat.hpp"

namespace dyncov {

// Objective to maximize. May return -inf for infeasible points; NaN is
// treated as -inf.
using Objective = std::function<double(const Vector&)>;

struct SearchOptions {
  int max_iters = 2000;
  double tol = 1e-8;           // relative spread of simplex values
  double initial_step = 0.5;   // simplex edge length per coordinate
};

struct SearchResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Derivative-free simplex search (reflection / expansion / contraction /
// shrink). If `best_trace` is given, the best value after every iteration
// is appended to it.
SearchResult nelder_mead_maximize(const Objective& f, const Vector& x0,
                                  const SearchOptions& opts,
                                  std::vector<double>* best_trace = nullptr);

// Quasi-Newton (BFGS) ascent on central-difference gradients with a
// backtracking line search. Only improving steps are taken, so the returned
// value is never below f(x0).
SearchResult gradient_polish(const Objective& f, const Vector& x0, double f0,
                             int max_iters, double tol,
                             std::vector<double>* best_trace = nullptr);

}  // namespace dyncov

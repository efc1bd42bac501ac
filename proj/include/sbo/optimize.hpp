#pragma once

#include "sbo/types.hpp"

#include <functional>

namespace sbo {

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 50;
  /// Stop when the projected gradient's infinity norm falls below
  /// grad_tol * max(|f|, 1e-8).
  double grad_tol = 1e-6;
  int max_backtracks = 30;
};

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Line search could not make progress from the start point.
  bool failed = false;
};

/// Objective returning f(x) and writing df/dx into `grad`.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

/// Bounded L-BFGS minimization by projected two-loop directions with an
/// Armijo backtracking search along the projected path. Every iterate lies in
/// [lower, upper]. Non-finite objective values are treated as +inf.
LbfgsResult minimize_box(const Objective& f, const Vector& x0, const Vector& lower,
                         const Vector& upper, const LbfgsOptions& options = {});

}  // namespace sbo

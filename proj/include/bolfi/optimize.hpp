#pragma once

#include <functional>
#include <span>
#include <vector>

#include "bolfi/models.hpp"

namespace bolfi {

/// Unconstrained derivative-free minimization (GSL simplex, nmsimplex2).
struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t evaluations = 0;
};

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> x0, double initial_step,
                             std::size_t max_evals, double size_tol = 1e-6);

/// Objective returning f(x); when `grad` is non-empty it also fills df/dx.
using SmoothObjective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct BoxMinimum {
  ParamVector x;
  double value = 0.0;
};

struct LocalSearchOptions {
  std::size_t max_iterations = 200;
  double step_tol = 1e-10;  // in unit-box coordinates
};

/// Projected-gradient descent with Barzilai-Borwein steps and Armijo
/// backtracking, run in box-normalized coordinates.
BoxMinimum local_minimize_box(const SmoothObjective& f, const Box& bounds, std::span<const double> start,
                              const LocalSearchOptions& options = {});

/// Best local minimum over all starts. Ties (within 1e-12 relative) resolve
/// to the lexicographically smallest point.
BoxMinimum multistart_minimize_box(const SmoothObjective& f, const Box& bounds,
                                   const std::vector<ParamVector>& starts,
                                   const LocalSearchOptions& options = {});

}  // namespace bolfi

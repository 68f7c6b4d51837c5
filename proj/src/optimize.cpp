#include "bolfi/optimize.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bolfi {

namespace {

struct NmContext {
  const std::function<double(std::span<const double>)>* f;
  std::size_t n;
  std::size_t evals = 0;
};

double nm_trampoline(const gsl_vector* v, void* params) {
  auto* ctx = static_cast<NmContext*>(params);
  ++ctx->evals;
  const double y = (*ctx->f)(std::span<const double>(v->data, ctx->n));
  return std::isfinite(y) ? y : std::numeric_limits<double>::max();
}

bool lex_less(std::span<const double> a, std::span<const double> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> x0, double initial_step,
                             std::size_t max_evals, double size_tol) {
  const std::size_t n = x0.size();
  NelderMeadResult res;
  if (n == 0) throw std::invalid_argument("nelder_mead: empty parameter vector");
  gsl_set_error_handler_off();

  NmContext ctx{&f, n};
  gsl_multimin_function fn{&nm_trampoline, n, &ctx};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* step = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x, i, x0[i]);
  gsl_vector_set_all(step, initial_step);

  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &fn, x, step);
  while (ctx.evals < max_evals) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), size_tol) == GSL_SUCCESS) break;
  }
  res.x.assign(s->x->data, s->x->data + n);
  res.value = s->fval;
  res.evaluations = ctx.evals;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return res;
}

BoxMinimum local_minimize_box(const SmoothObjective& f, const Box& bounds,
                              std::span<const double> start, const LocalSearchOptions& options) {
  const std::size_t d = bounds.dims();
  std::vector<double> w(d);
  for (std::size_t j = 0; j < d; ++j) w[j] = bounds.width(j);

  // Work in u = (theta - lower) / width.
  std::vector<double> u(d), theta(d), g(d), gu(d);
  for (std::size_t j = 0; j < d; ++j) u[j] = std::clamp((start[j] - bounds.lower[j]) / w[j], 0.0, 1.0);

  auto eval = [&](const std::vector<double>& uu, std::vector<double>& grad_u) {
    for (std::size_t j = 0; j < d; ++j) theta[j] = bounds.lower[j] + uu[j] * w[j];
    const double v = f(theta, g);
    for (std::size_t j = 0; j < d; ++j) grad_u[j] = g[j] * w[j];
    return v;
  };

  double fu = eval(u, gu);
  if (!std::isfinite(fu)) return {bounds.from_unit(u), fu};

  double step = 0.1;
  std::vector<double> un(d), gn(d), dir(d);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      double dnorm = 0.0, slope = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        un[j] = std::clamp(u[j] - step * gu[j], 0.0, 1.0);
        dir[j] = un[j] - u[j];
        dnorm = std::max(dnorm, std::abs(dir[j]));
        slope += gu[j] * dir[j];
      }
      if (dnorm < options.step_tol) break;
      const double fn = eval(un, gn);
      if (std::isfinite(fn) && fn <= fu + 1e-4 * slope) {
        // Barzilai-Borwein step for the next iteration.
        double ss = 0.0, sy = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double sj = un[j] - u[j];
          ss += sj * sj;
          sy += sj * (gn[j] - gu[j]);
        }
        step = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 10.0) : std::min(step * 2.0, 10.0);
        u.swap(un);
        gu.swap(gn);
        fu = fn;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return {bounds.from_unit(u), fu};
}

BoxMinimum multistart_minimize_box(const SmoothObjective& f, const Box& bounds,
                                   const std::vector<ParamVector>& starts,
                                   const LocalSearchOptions& options) {
  if (starts.empty()) throw std::invalid_argument("multistart_minimize_box: no starts");
  BoxMinimum best;
  bool have = false;
  for (const auto& s : starts) {
    BoxMinimum m = local_minimize_box(f, bounds, s, options);
    if (!have) {
      best = std::move(m);
      have = true;
      continue;
    }
    const double tol = 1e-12 * (1.0 + std::abs(best.value));
    if (m.value < best.value - tol || (std::abs(m.value - best.value) <= tol && lex_less(m.x, best.x))) {
      best = std::move(m);
    }
  }
  return best;
}

}  // namespace bolfi

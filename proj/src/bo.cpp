#include "bolfi/bo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>

#include "bolfi/errors.hpp"
#include "bolfi/parallel.hpp"
#include "bolfi/sobol.hpp"

namespace bolfi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<ParamVector> start_points(const Box& bounds, std::size_t count, const ParamVector* incumbent) {
  std::vector<ParamVector> starts = sobol_points(bounds, count);
  if (incumbent) starts.push_back(bounds.clamp(*incumbent));
  return starts;
}

}  // namespace

void AcquisitionConfig::validate() const {
  if (!(epsilon_eta > 0.0 && epsilon_eta < 1.0)) throw std::invalid_argument("epsilon_eta must be in (0, 1)");
  if (t0 < 1) throw std::invalid_argument("t0 must be at least 1");
  if (T < t0) throw std::invalid_argument("T must be at least t0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(rel_tolerance >= 0.0 && rel_tolerance <= 1.0)) throw std::invalid_argument("rel_tolerance must be in [0, 1]");
  if (multistart < 1) throw std::invalid_argument("multistart must be at least 1");
}

double eta_sq(std::size_t t, std::size_t d, double epsilon_eta) {
  if (t < 1) throw std::invalid_argument("eta_sq: t must be >= 1");
  const double e = static_cast<double>(d) / 2.0 + 2.0;
  return 2.0 * (e * std::log(static_cast<double>(t)) + std::log(M_PI * M_PI / (3.0 * epsilon_eta)));
}

double acquisition_value(const GpPosterior& gp, std::span<const double> theta, std::size_t t,
                         const AcquisitionConfig& config) {
  double shift = 0.0;
  if (config.prior_modulation) {
    const double lp = config.prior_modulation->log_pdf(theta);
    if (!(lp > -kInf)) return kInf;
    shift = -2.0 * lp;
  }
  const PosteriorPoint p = gp.at(theta);
  return p.mean + shift - std::sqrt(eta_sq(t, gp.dims(), config.epsilon_eta) * p.var_latent);
}

double acquisition_value_grad(const GpPosterior& gp, std::span<const double> theta, std::size_t t,
                              const AcquisitionConfig& config, std::span<double> grad) {
  const std::size_t d = gp.dims();
  double shift = 0.0;
  std::vector<double> prior_grad;
  if (config.prior_modulation) {
    const double lp = config.prior_modulation->log_pdf(theta);
    if (!(lp > -kInf)) {
      std::fill(grad.begin(), grad.end(), 0.0);
      return kInf;
    }
    shift = -2.0 * lp;
    if (!grad.empty()) {
      prior_grad.resize(d);
      config.prior_modulation->log_pdf_gradient(theta, prior_grad);
    }
  }
  const double eta2 = eta_sq(t, d, config.epsilon_eta);
  if (grad.empty()) {
    const PosteriorPoint p = gp.at(theta);
    return p.mean + shift - std::sqrt(eta2 * p.var_latent);
  }
  const PosteriorGradient g = gp.at_with_gradient(theta);
  const double sd = std::sqrt(g.value.var_latent);
  for (std::size_t j = 0; j < d; ++j) {
    grad[j] = g.d_mean[j];
    if (sd > 1e-150) grad[j] -= std::sqrt(eta2) * g.d_var[j] / (2.0 * sd);
    if (!prior_grad.empty()) grad[j] -= 2.0 * prior_grad[j];
  }
  return g.value.mean + shift - std::sqrt(eta2) * sd;
}

BoxMinimum minimize_acquisition(const GpPosterior& gp, const Box& bounds, std::size_t t,
                                const AcquisitionConfig& config, const ParamVector* incumbent) {
  const SmoothObjective f = [&](std::span<const double> x, std::span<double> grad) {
    return acquisition_value_grad(gp, x, t, config, grad);
  };
  return multistart_minimize_box(f, bounds, start_points(bounds, config.multistart, incumbent));
}

StochasticProposal stochastic_propose(const GpPosterior& gp, const Box& bounds, std::size_t t,
                                      const AcquisitionConfig& config, Stream& rng,
                                      const ParamVector* incumbent) {
  const std::size_t d = bounds.dims();
  StochasticProposal out;
  out.minimizer = minimize_acquisition(gp, bounds, t, config, incumbent);
  const double a_min = out.minimizer.value;

  // Range of A over the box from a quasi-random probe.
  double a_max = a_min;
  for (const auto& p : sobol_points(bounds, config.probe_per_dim * d)) {
    const double a = acquisition_value(gp, p, t, config);
    if (std::isfinite(a)) a_max = std::max(a_max, a);
  }
  out.acq_max = a_max;
  out.tolerance_level = a_min + config.rel_tolerance * (a_max - a_min);

  if (config.rel_tolerance == 0.0) {
    out.stds.assign(d, 0.0);
    out.draws.assign(config.batch_size, out.minimizer.x);
    return out;
  }

  const double tau = out.tolerance_level;
  const ParamVector& c = out.minimizer.x;
  auto within = [&](std::size_t j, double xj) {
    ParamVector p = c;
    p[j] = xj;
    return acquisition_value(gp, p, t, config) <= tau;
  };
  // Farthest point along the axis (towards `edge`) where A stays below tau,
  // assuming the sublevel set is an interval around the minimizer.
  auto endpoint = [&](std::size_t j, double edge) {
    if (within(j, edge)) return edge;
    double in = c[j], outp = edge;
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (in + outp);
      if (within(j, mid)) in = mid; else outp = mid;
    }
    return in;
  };

  out.stds.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double lo = endpoint(j, bounds.lower[j]);
    const double hi = endpoint(j, bounds.upper[j]);
    out.stds[j] = std::max(0.5 * (hi - lo), 1e-6 * bounds.width(j));
  }

  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t b = 0; b < config.batch_size; ++b) {
    ParamVector x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = c[j] + out.stds[j] * nd(rng);
    out.draws.push_back(bounds.clamp(x));
  }
  return out;
}

double estimate_j(const GpPosterior& gp, std::span<const double> theta, const ResponseTransform& response) {
  const PosteriorPoint p = gp.at(theta);
  if (!response.is_log()) return p.mean;
  return response.offset + std::exp(p.mean + 0.5 * p.var_obs);
}

BoxMinimum argmin_jhat(const GpPosterior& gp, const Box& bounds, const ResponseTransform& response,
                       std::size_t multistart) {
  const bool log_mode = response.is_log();
  const SmoothObjective f = [&](std::span<const double> x, std::span<double> grad) {
    if (grad.empty()) {
      const PosteriorPoint p = gp.at(x);
      return log_mode ? p.mean + 0.5 * p.var_latent : p.mean;
    }
    const PosteriorGradient g = gp.at_with_gradient(x);
    for (std::size_t j = 0; j < grad.size(); ++j) {
      grad[j] = g.d_mean[j] + (log_mode ? 0.5 * g.d_var[j] : 0.0);
    }
    return log_mode ? g.value.mean + 0.5 * g.value.var_latent : g.value.mean;
  };
  // Seed with the best training input as well.
  ParamVector best_input;
  if (gp.size() > 0) {
    Eigen::Index i = 0;
    gp.responses().minCoeff(&i);
    best_input.resize(gp.dims());
    for (std::size_t j = 0; j < gp.dims(); ++j) best_input[j] = gp.inputs()(i, j);
  }
  BoxMinimum m = multistart_minimize_box(
      f, bounds, start_points(bounds, multistart, best_input.empty() ? nullptr : &best_input));
  const PosteriorPoint p = gp.at(m.x);
  m.value = log_mode ? response.offset + std::exp(p.mean + 0.5 * p.var_obs) : p.mean;
  return m;
}

// ---- The loop --------------------------------------------------------------

namespace {

struct Outcome {
  bool ok = false;
  double delta = 0.0;
  std::string message;
};

Outcome simulate_once(const DiscrepancyModel& model, std::span<const double> theta, Stream rng) {
  Outcome o;
  try {
    o.delta = model.evaluate(theta, rng);
    if (!std::isfinite(o.delta)) {
      o.message = "non-finite discrepancy";
      return o;
    }
    o.ok = true;
  } catch (const SimulationError& e) {
    o.message = e.what();
  } catch (const NotPositiveDefinite& e) {
    o.message = e.what();
  }
  return o;
}

class Loop {
public:
  Loop(const DiscrepancyModel& model, const BoConfig& cfg, std::uint64_t seed)
      : model_(model), cfg_(cfg), seed_(seed) {
    state_.evidence = Evidence(cfg.bounds.dims());
  }

  BoState run() {
    const auto& ac = cfg_.acquisition;
    const std::uint64_t calls0 = model_.calls();
    const std::uint64_t data0 = model_.datasets();

    const auto init = sobol_points(cfg_.bounds, ac.t0);
    std::vector<Outcome> results(init.size());
    parallel_for(init.size(), cfg_.workers, [&](std::size_t i) {
      results[i] = simulate_with_retries(init[i], i, nullptr);
    });
    sort_failures();
    for (std::size_t i = 0; i < init.size(); ++i) append(init[i], results[i]);
    refit(true);
    std::size_t since_refit = 0;

    std::size_t step = 0;
    while (state_.evidence.size() < ac.T) {
      const std::size_t t = state_.evidence.size();
      const std::size_t batch = std::min(ac.batch_size, ac.T - t);
      const ParamVector incumbent = best_input();

      std::vector<AcquisitionRecord> recs(batch);
      std::vector<ParamVector> proposals(batch);
      Stream prop_rng(seed_, "bolfi/propose", step);
      propose(t, batch, incumbent, prop_rng, recs, proposals);

      std::vector<Outcome> outs(batch);
      parallel_for(batch, cfg_.workers, [&](std::size_t b) {
        outs[b] = simulate_with_retries(proposals[b], t + b, &recs[b]);
      });
      sort_failures();
      // Serialized update: the GP only ever sees complete batches.
      for (std::size_t b = 0; b < batch; ++b) {
        append(recs[b].proposed, outs[b]);
        state_.log.push_back(std::move(recs[b]));
      }
      since_refit += batch;
      if (since_refit >= cfg_.refit_every && !cfg_.fixed_hyperparams) {
        refit(false);
        since_refit = 0;
      } else {
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t k = state_.evidence.size() - batch + b;
          state_.gp = state_.gp.extended(state_.evidence.theta(k), state_.evidence.response(k));
        }
      }
      ++step;
    }
    state_.simulations = model_.calls() - calls0;
    state_.datasets = model_.datasets() - data0;
    return std::move(state_);
  }

private:
  void sort_failures() {
    std::stable_sort(state_.failures.begin(), state_.failures.end(),
                     [](const FailureRecord& a, const FailureRecord& b) { return a.t < b.t; });
  }

  ParamVector best_input() const {
    const auto& r = state_.evidence.responses();
    const auto i = static_cast<std::size_t>(std::min_element(r.begin(), r.end()) - r.begin());
    auto th = state_.evidence.theta(i);
    return {th.begin(), th.end()};
  }

  void propose(std::size_t t, std::size_t batch, const ParamVector& incumbent, Stream& rng,
               std::vector<AcquisitionRecord>& recs, std::vector<ParamVector>& proposals) {
    const auto& ac = cfg_.acquisition;
    AcquisitionConfig local = ac;
    local.batch_size = batch;
    const double e2 = eta_sq(t, cfg_.bounds.dims(), ac.epsilon_eta);
    if (ac.rule == AcquisitionRule::Deterministic) {
      const BoxMinimum m = minimize_acquisition(state_.gp, cfg_.bounds, t, local, &incumbent);
      for (std::size_t b = 0; b < batch; ++b) {
        recs[b] = {t, b, m.x, m.x, m.value, m.value, e2, {}, ParamVector(m.x.size(), 0.0), 0};
        proposals[b] = m.x;
      }
      return;
    }
    const StochasticProposal sp = stochastic_propose(state_.gp, cfg_.bounds, t, local, rng, &incumbent);
    for (std::size_t b = 0; b < batch; ++b) {
      ParamVector off(sp.draws[b].size());
      for (std::size_t j = 0; j < off.size(); ++j) off[j] = sp.draws[b][j] - sp.minimizer.x[j];
      recs[b] = {t, b, sp.draws[b], sp.minimizer.x, sp.minimizer.value, sp.acq_max, e2, sp.stds, off, 0};
      proposals[b] = sp.draws[b];
    }
  }

  // Simulates at theta; on failure re-proposes (stochastic rule) or retries
  // with fresh simulator randomness, at most max_retries times.
  Outcome simulate_with_retries(ParamVector theta, std::size_t index, AcquisitionRecord* rec) {
    Outcome o;
    for (unsigned r = 0; r <= cfg_.max_retries; ++r) {
      o = simulate_once(model_, theta, Stream(seed_, "bolfi/simulate", index).child("attempt", r));
      if (o.ok) return o;
      {
        std::lock_guard<std::mutex> lock(failure_mutex_);
        state_.failures.push_back({index, theta, o.message});
      }
      if (rec) {
        rec->retries = r + 1;
        if (cfg_.acquisition.rule == AcquisitionRule::Stochastic) {
          Stream redraw = Stream(seed_, "bolfi/redraw", index).child("attempt", r);
          std::normal_distribution<double> nd(0.0, 1.0);
          for (std::size_t j = 0; j < theta.size(); ++j) {
            theta[j] = rec->minimizer[j] + rec->stds[j] * nd(redraw);
            rec->offset[j] = 0.0;
          }
          theta = cfg_.bounds.clamp(theta);
          for (std::size_t j = 0; j < theta.size(); ++j) rec->offset[j] = theta[j] - rec->minimizer[j];
          rec->proposed = theta;
        }
      }
    }
    throw SimulationError("simulator failed " + std::to_string(cfg_.max_retries + 1) +
                          " times for evidence index " + std::to_string(index) + ": " + o.message);
  }

  void append(std::span<const double> theta, const Outcome& o) {
    state_.discrepancies.push_back(o.delta);
    state_.evidence.append(theta, cfg_.response.forward(o.delta));
  }

  void refit(bool initial) {
    const std::size_t t = state_.evidence.size();
    if (cfg_.fixed_hyperparams) {
      state_.gp = GpPosterior::build(state_.evidence, *cfg_.fixed_hyperparams);
      if (initial) state_.hyper_history.push_back({t, *cfg_.fixed_hyperparams, 0.0, false});
      return;
    }
    GpHyperparams init = initial ? default_hyperparams(state_.evidence, cfg_.bounds, cfg_.mean_kind)
                                 : state_.gp.hyperparams();
    if (t < 2) {
      state_.gp = GpPosterior::build(state_.evidence, init);
      state_.hyper_history.push_back({t, init, 0.0, false});
      return;
    }
    FitOptions fo;
    fo.mean_kind = cfg_.mean_kind;
    fo.bounds = cfg_.bounds;
    fo.sobol_starts = initial ? cfg_.initial_fit_starts : cfg_.refit_starts;
    fo.max_evals_per_start = cfg_.fit_max_evals;
    FitResult fr = fit_hyperparameters(state_.evidence, init, fo);
    try {
      state_.gp = GpPosterior::build(state_.evidence, fr.hyper);
    } catch (const IllConditioned&) {
      // Keep the loop alive with a fresh default when the previous setting
      // cannot be factorized on the grown evidence.
      fr.hyper = default_hyperparams(state_.evidence, cfg_.bounds, cfg_.mean_kind);
      fr.improved = false;
      state_.gp = GpPosterior::build(state_.evidence, fr.hyper);
    }
    state_.hyper_history.push_back({t, fr.hyper, fr.score, fr.improved});
  }

  const DiscrepancyModel& model_;
  const BoConfig& cfg_;
  std::uint64_t seed_;
  BoState state_;
  std::mutex failure_mutex_;
};

}  // namespace

BoState run_bolfi(const DiscrepancyModel& model, const BoConfig& config, std::uint64_t master_seed) {
  config.acquisition.validate();
  if (config.bounds.dims() != model.dims()) throw std::invalid_argument("bounds / model dimension mismatch");
  if (config.refit_every < 1) throw std::invalid_argument("refit_every must be at least 1");
  Loop loop(model, config, master_seed);
  return loop.run();
}

}  // namespace bolfi

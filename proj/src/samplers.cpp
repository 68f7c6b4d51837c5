#include "bolfi/samplers.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "bolfi/errors.hpp"
#include "bolfi/numeric.hpp"
#include "bolfi/parallel.hpp"

namespace bolfi {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kChunk = 64;
}  // namespace

// ---- WeightedParticles -----------------------------------------------------

double WeightedParticles::ess() const {
  double total = 0.0, sq = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return 0.0;
  for (double w : weights) sq += (w / total) * (w / total);
  return 1.0 / sq;
}

std::vector<double> WeightedParticles::mean() const {
  std::vector<double> m(dims, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    total += weights[i];
    for (std::size_t j = 0; j < dims; ++j) m[j] += weights[i] * thetas[i * dims + j];
  }
  for (double& v : m) v /= total;
  return m;
}

std::vector<double> WeightedParticles::sd() const {
  const auto m = mean();
  std::vector<double> s(dims, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    total += weights[i];
    for (std::size_t j = 0; j < dims; ++j) {
      const double d = thetas[i * dims + j] - m[j];
      s[j] += weights[i] * d * d;
    }
  }
  for (double& v : s) v = std::sqrt(v / total);
  return s;
}

double WeightedParticles::quantile(std::size_t j, double q) const {
  std::vector<double> col(size());
  for (std::size_t i = 0; i < size(); ++i) col[i] = thetas[i * dims + j];
  return weighted_quantile(col, weights, q);
}

WeightedParticles particles_from_log_weights(std::size_t dims, std::vector<double> thetas,
                                             std::span<const double> log_weights) {
  double mx = kNegInf;
  for (double lw : log_weights) mx = std::max(mx, lw);
  if (!(mx > kNegInf) || std::isnan(mx)) {
    throw DegeneratePosterior("all importance weights are zero", mx);
  }
  WeightedParticles p;
  p.dims = dims;
  p.thetas = std::move(thetas);
  p.weights.resize(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    p.weights[i] = std::exp(log_weights[i] - mx);
    total += p.weights[i];
  }
  for (double& w : p.weights) w /= total;
  p.normalized = true;
  return p;
}

// ---- Importance sampling ---------------------------------------------------

WeightedParticles importance_posterior(const LogLikelihood& log_lik, const Distribution& prior,
                                       const Distribution& proposal, std::size_t m, Stream& rng,
                                       std::size_t workers) {
  if (m == 0) throw std::invalid_argument("importance_posterior: M must be >= 1");
  const std::size_t d = proposal.dims();
  std::vector<double> thetas(m * d);
  std::vector<double> lw(m);
  const Stream base = rng;
  parallel_for(m, workers, [&](std::size_t i) {
    Stream s = base.child("particle", i);
    const ParamVector th = proposal.sample(s);
    std::copy(th.begin(), th.end(), thetas.begin() + static_cast<std::ptrdiff_t>(i * d));
    const double lp = prior.log_pdf(th);
    if (!(lp > kNegInf)) {
      lw[i] = kNegInf;
      return;
    }
    const double ll = log_lik(th);
    lw[i] = (ll > kNegInf) ? ll + lp - proposal.log_pdf(th) : kNegInf;
  });
  return particles_from_log_weights(d, std::move(thetas), lw);
}

WeightedParticles uniform_kernel_weights(std::size_t dims, std::vector<double> thetas,
                                         const std::vector<std::vector<double>>& deltas, double h,
                                         const Distribution& prior, const Distribution& proposal,
                                         double c) {
  const std::size_t m = deltas.size();
  if (thetas.size() != m * dims) throw std::invalid_argument("uniform_kernel_weights: shape mismatch");
  if (!(c > 0.0)) throw std::invalid_argument("uniform_kernel_weights: c must be positive");
  std::vector<double> lw(m);
  const KernelSpec kernel = KernelSpec::uniform(h, c);
  std::size_t any = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::span<const double> th(thetas.data() + i * dims, dims);
    const double lik = kernel_lik_sample(deltas[i], kernel);
    any += lik > 0.0 ? 1 : 0;
    const double lp = prior.log_pdf(th);
    lw[i] = (lik > 0.0 && lp > kNegInf) ? std::log(lik) + lp - proposal.log_pdf(th) : kNegInf;
  }
  if (any == 0) throw DegeneratePosterior("no discrepancy fell below the threshold", kNegInf);
  return particles_from_log_weights(dims, std::move(thetas), lw);
}

// ---- ABC rejection ---------------------------------------------------------

namespace {

struct Draw {
  ParamVector theta;
  double delta = std::numeric_limits<double>::infinity();
  bool simulated = false;
};

// Evaluates proposals [begin, begin + n) in parallel; results by index.
template <class ProposeFn>
std::vector<Draw> run_chunk(const DiscrepancyModel& model, std::size_t begin, std::size_t n,
                            const Stream& base, std::size_t workers, ProposeFn&& propose) {
  std::vector<Draw> out(n);
  parallel_for(n, workers, [&](std::size_t k) {
    const std::size_t i = begin + k;
    Stream ps = base.child("proposal", i);
    Draw& dr = out[k];
    if (!propose(ps, dr.theta)) return;
    Stream ss = base.child("simulate", i);
    dr.simulated = true;
    try {
      dr.delta = model.evaluate(dr.theta, ss);
    } catch (const SimulationError&) {
      dr.delta = std::numeric_limits<double>::infinity();
    }
  });
  return out;
}

}  // namespace

AbcResult abc_rejection(const DiscrepancyModel& model, const Distribution& prior, double h,
                        const AbcStop& stop, Stream& rng, std::size_t workers) {
  if (!(h > 0.0)) throw std::invalid_argument("abc_rejection: h must be positive");
  const std::size_t d = prior.dims();
  const std::uint64_t calls0 = model.calls();
  AbcResult res;
  std::vector<double> accepted_thetas;
  const Stream base = rng;
  const std::uint64_t limit = stop.mode == AbcStop::Mode::Proposals ? stop.count : stop.cap;
  auto propose = [&](Stream& s, ParamVector& th) {
    th = prior.sample(s);
    return true;
  };

  std::uint64_t next = 0;
  bool done = false;
  while (!done && next < limit) {
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(kChunk, limit - next));
    const auto draws = run_chunk(model, static_cast<std::size_t>(next), n, base, workers, propose);
    for (const auto& dr : draws) {
      ++res.proposals;
      if (dr.delta < h) {
        accepted_thetas.insert(accepted_thetas.end(), dr.theta.begin(), dr.theta.end());
        res.accepted_deltas.push_back(dr.delta);
        ++res.accepted;
        if (stop.mode == AbcStop::Mode::Accepted && res.accepted == stop.count) {
          done = true;
          break;
        }
      }
    }
    next += n;
  }
  res.simulations = model.calls() - calls0;
  if (res.accepted == 0) {
    throw BudgetExhausted("ABC rejection accepted no proposal out of " + std::to_string(res.proposals));
  }
  if (stop.mode == AbcStop::Mode::Accepted && res.accepted < stop.count) {
    throw BudgetExhausted("ABC rejection reached the simulation cap with " + std::to_string(res.accepted) +
                          " of " + std::to_string(stop.count) + " acceptances");
  }
  res.particles.dims = d;
  res.particles.thetas = std::move(accepted_thetas);
  res.particles.weights.assign(res.accepted, 1.0 / static_cast<double>(res.accepted));
  res.particles.normalized = true;
  return res;
}

// ---- PMC-ABC ---------------------------------------------------------------

GaussianMixture mixture_from_particles(const WeightedParticles& particles, const Box& bounds) {
  const std::size_t d = particles.dims;
  if (bounds.dims() != d) throw std::invalid_argument("mixture_from_particles: bounds dimension mismatch");
  std::vector<double> centers, weights;
  double total = 0.0;
  for (double w : particles.weights) total += w;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < particles.size(); ++i) {
    if (!(particles.weights[i] > 0.0)) continue;
    const double w = particles.weights[i] / total;
    weights.push_back(w);
    for (std::size_t j = 0; j < d; ++j) {
      centers.push_back(particles.thetas[i * d + j]);
      m[j] += w * particles.thetas[i * d + j];
    }
  }
  if (weights.empty()) throw DegeneratePosterior("mixture from particles with zero weight", kNegInf);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::VectorXd x(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < weights.size(); ++k) {
    for (std::size_t j = 0; j < d; ++j) x[j] = centers[k * d + j] - m[j];
    cov.noalias() += weights[k] * x * x.transpose();
  }
  cov *= 2.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double floor = 1e-8 * bounds.width(j) * bounds.width(j);
    cov(j, j) = std::max(cov(j, j), floor);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    for (std::size_t j = 0; j < d; ++j) cov(j, j) += 1e-8 * bounds.width(j) * bounds.width(j);
  }
  return GaussianMixture(std::move(centers), std::move(weights), std::move(cov));
}

std::uint64_t PmcResult::total_simulations() const {
  std::uint64_t s = initial_simulations;
  for (const auto& g : generations) s += g.simulations;
  return s;
}

PmcResult pmc_abc(const DiscrepancyModel& model, const Distribution& prior, const Box& bounds,
                  const PmcConfig& config, Stream& rng) {
  if (config.generations < 1) throw std::invalid_argument("pmc_abc: at least one generation");
  if (!config.thresholds.empty()) {
    if (config.thresholds.size() != config.generations) {
      throw std::invalid_argument("pmc_abc: threshold schedule length differs from generations");
    }
    for (std::size_t g = 0; g < config.thresholds.size(); ++g) {
      if (!(config.thresholds[g] > 0.0) || (g > 0 && config.thresholds[g] > config.thresholds[g - 1])) {
        throw std::invalid_argument("pmc_abc: thresholds must be positive and non-increasing");
      }
    }
  }
  const std::size_t d = prior.dims();
  PmcResult res;

  double h = 0.0;
  if (config.thresholds.empty()) {
    // Prior-predictive pilot run fixes the first threshold.
    const std::uint64_t c0 = model.calls();
    Stream pilot_rng = rng.child("pilot");
    std::vector<double> pilot;
    auto propose = [&](Stream& s, ParamVector& th) {
      th = prior.sample(s);
      return true;
    };
    const auto draws = run_chunk(model, 0, config.initial_simulations, pilot_rng, config.workers, propose);
    for (const auto& dr : draws) {
      if (std::isfinite(dr.delta)) pilot.push_back(dr.delta);
    }
    res.initial_simulations = model.calls() - c0;
    h = threshold_from_sample(pilot, config.quantile);
  } else {
    h = config.thresholds[0];
  }

  // Generation 1 is plain rejection sampling from the prior.
  {
    AbcResult first = abc_rejection(model, prior, h, AbcStop::accepted(config.target_accepted, config.simulation_cap),
                                    rng, config.workers);
    PmcGeneration g;
    g.particles = std::move(first.particles);
    g.threshold = h;
    g.simulations = first.simulations;
    g.proposals = first.proposals;
    g.accepted = first.accepted;
    g.accepted_deltas = std::move(first.accepted_deltas);
    res.generations.push_back(std::move(g));
  }

  for (std::size_t gen = 1; gen < config.generations; ++gen) {
    const PmcGeneration& prev = res.generations.back();
    h = config.thresholds.empty() ? threshold_from_sample(prev.accepted_deltas, config.quantile)
                                  : config.thresholds[gen];
    const GaussianMixture q = mixture_from_particles(prev.particles, bounds);
    const Stream base = rng.child("generation", gen);
    const std::uint64_t c0 = model.calls();

    PmcGeneration g;
    g.threshold = h;
    std::vector<double> thetas, lw;
    auto propose = [&](Stream& s, ParamVector& th) {
      th = q.sample(s);
      return prior.log_pdf(th) > kNegInf;
    };
    std::uint64_t next = 0;
    while (g.accepted < config.target_accepted && next < config.simulation_cap) {
      const auto draws = run_chunk(model, static_cast<std::size_t>(next), kChunk, base, config.workers, propose);
      next += kChunk;
      for (const auto& dr : draws) {
        ++g.proposals;
        if (!dr.simulated || !(dr.delta < h)) continue;
        thetas.insert(thetas.end(), dr.theta.begin(), dr.theta.end());
        lw.push_back(prior.log_pdf(dr.theta) - q.log_pdf(dr.theta));
        g.accepted_deltas.push_back(dr.delta);
        if (++g.accepted == config.target_accepted) break;
      }
    }
    g.simulations = model.calls() - c0;
    if (g.accepted < config.target_accepted) {
      throw BudgetExhausted("PMC-ABC generation " + std::to_string(gen + 1) + " reached its simulation cap with " +
                            std::to_string(g.accepted) + " of " + std::to_string(config.target_accepted) +
                            " acceptances");
    }
    g.particles = particles_from_log_weights(d, std::move(thetas), lw);
    res.generations.push_back(std::move(g));
  }
  return res;
}

// ---- Model-based iterative IS ----------------------------------------------

WeightedParticles iterative_model_based_is(const LogLikelihood& log_lik,
                                           const std::vector<ParamVector>& acquired,
                                           const Distribution& prior, const Box& bounds,
                                           std::size_t iterations, std::size_t m, Stream& rng,
                                           std::size_t workers) {
  if (acquired.size() < 2) throw std::invalid_argument("iterative_model_based_is: need at least two acquired points");
  if (iterations < 1) throw std::invalid_argument("iterative_model_based_is: at least one iteration");
  const std::size_t d = bounds.dims();
  WeightedParticles seed;
  seed.dims = d;
  for (const auto& th : acquired) seed.thetas.insert(seed.thetas.end(), th.begin(), th.end());
  seed.weights.assign(acquired.size(), 1.0 / static_cast<double>(acquired.size()));
  seed.normalized = true;

  GaussianMixture q = mixture_from_particles(seed, bounds);
  WeightedParticles current;
  for (std::size_t it = 0; it < iterations; ++it) {
    Stream s = rng.child("iteration", it);
    current = importance_posterior(log_lik, prior, q, m, s, workers);
    if (it + 1 < iterations) q = mixture_from_particles(current, bounds);
  }
  return current;
}

// ---- Random-walk Metropolis ------------------------------------------------

WeightedParticles McmcChain::posterior() const {
  WeightedParticles p;
  p.dims = dims;
  const std::size_t n = length();
  const std::size_t start = std::min(burn_in, n);
  p.thetas.assign(samples.begin() + static_cast<std::ptrdiff_t>(start * dims), samples.end());
  p.weights.assign(n - start, n > start ? 1.0 / static_cast<double>(n - start) : 0.0);
  p.normalized = n > start;
  return p;
}

McmcChain rw_metropolis_synthetic(const SyntheticLikelihoodModel& model, const Distribution& prior,
                                  const McmcConfig& config, Stream& rng) {
  const std::size_t d = model.dims();
  if (config.start.size() != d || config.proposal_sd.size() != d) {
    throw std::invalid_argument("rw_metropolis_synthetic: dimension mismatch");
  }
  std::vector<bool> logs = config.log_scale;
  logs.resize(d, false);
  for (std::size_t j = 0; j < d; ++j) {
    if (!(config.proposal_sd[j] >= 0.0)) throw std::invalid_argument("proposal sd must be nonnegative");
    if (logs[j] && !(config.start[j] > 0.0)) throw std::invalid_argument("log-scale coordinate must start positive");
  }
  if (!(config.burn_in_fraction >= 0.0 && config.burn_in_fraction < 1.0)) {
    throw std::invalid_argument("burn-in fraction must be in [0, 1)");
  }

  const std::uint64_t calls0 = model.calls();
  McmcChain chain;
  chain.dims = d;
  ParamVector cur = config.start;
  double lp_cur = prior.log_pdf(cur);
  if (!(lp_cur > kNegInf)) throw std::invalid_argument("MCMC start has zero prior density");
  Stream s0 = rng.child("evaluate", 0);
  double ll_cur = -model.evaluate(cur, s0);

  chain.samples.reserve((config.iterations + 1) * d);
  chain.samples.insert(chain.samples.end(), cur.begin(), cur.end());
  chain.loglik.push_back(ll_cur);
  std::normal_distribution<double> nd(0.0, 1.0);
  ParamVector prop(d);
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    Stream ps = rng.child("propose", it);
    ++chain.proposals;
    double log_jac = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = config.proposal_sd[j] * nd(ps);
      if (logs[j]) {
        prop[j] = cur[j] * std::exp(e);
        // Symmetric walk in log theta: the target in z = log theta picks up |d theta / dz| = theta.
        log_jac += std::log(prop[j]) - std::log(cur[j]);
      } else {
        prop[j] = cur[j] + e;
      }
    }
    const double lp_prop = prior.log_pdf(prop);
    if (lp_prop > kNegInf) {
      Stream es = rng.child("evaluate", it);
      double ll_prop = kNegInf;
      bool ok = true;
      try {
        ll_prop = -model.evaluate(prop, es);
      } catch (const NotPositiveDefinite&) {
        ok = false;
      } catch (const SimulationError&) {
        ok = false;
      }
      if (!ok) {
        ++chain.rejected_singular;
      } else {
        const double log_alpha = ll_prop - ll_cur + lp_prop - lp_cur + log_jac;
        if (std::log(ps.uniform()) < log_alpha) {
          cur = prop;
          ll_cur = ll_prop;
          lp_cur = lp_prop;
          ++chain.accepted;
        }
      }
    } else {
      ++chain.rejected_prior;
    }
    chain.samples.insert(chain.samples.end(), cur.begin(), cur.end());
    chain.loglik.push_back(ll_cur);
  }
  chain.burn_in = static_cast<std::size_t>(std::floor(config.burn_in_fraction * static_cast<double>(chain.length())));
  chain.simulations = model.calls() - calls0;
  return chain;
}

}  // namespace bolfi

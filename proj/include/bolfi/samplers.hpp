#pragma once

// Posterior inference given a computable (approximate) likelihood:
// importance sampling, iterative mixture importance sampling on a GP
// likelihood, ABC rejection, PMC-ABC and a random-walk Metropolis baseline on
// the synthetic likelihood.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bolfi/distributions.hpp"
#include "bolfi/likelihoods.hpp"
#include "bolfi/models.hpp"
#include "bolfi/rng.hpp"

namespace bolfi {

struct WeightedParticles {
  std::size_t dims = 0;
  std::vector<double> thetas;  // row-major M x d
  std::vector<double> weights;
  bool normalized = false;

  std::size_t size() const { return weights.size(); }
  std::span<const double> theta(std::size_t i) const { return {thetas.data() + i * dims, dims}; }
  /// 1 / sum w^2 of the normalized weights.
  double ess() const;
  std::vector<double> mean() const;
  std::vector<double> sd() const;
  /// Weighted quantile of coordinate j (weighted empirical cdf inverse).
  double quantile(std::size_t j, double q) const;
};

/// Normalizes log-weights; throws DegeneratePosterior when all are -inf.
WeightedParticles particles_from_log_weights(std::size_t dims, std::vector<double> thetas,
                                             std::span<const double> log_weights);

/// log L-hat(theta); may return -inf.
using LogLikelihood = std::function<double(std::span<const double> theta)>;

/// Draws M proposals from q and weights them by L p / q.
WeightedParticles importance_posterior(const LogLikelihood& log_lik, const Distribution& prior,
                                       const Distribution& proposal, std::size_t m, Stream& rng,
                                       std::size_t workers = 1);

/// Weights proportional to c * #{Delta_j < h} / N * p / q; c cancels after
/// normalization. `deltas[m]` holds the N discrepancies of particle m.
WeightedParticles uniform_kernel_weights(std::size_t dims, std::vector<double> thetas,
                                         const std::vector<std::vector<double>>& deltas, double h,
                                         const Distribution& prior, const Distribution& proposal,
                                         double c = 1.0);

struct AbcStop {
  enum class Mode { Proposals, Accepted };
  Mode mode = Mode::Proposals;
  std::size_t count = 1000;      // proposals, or accepted particles wanted
  std::uint64_t cap = 10000000;  // proposal cap in Accepted mode

  static AbcStop proposals(std::size_t m) { return {Mode::Proposals, m, m}; }
  static AbcStop accepted(std::size_t n, std::uint64_t cap) { return {Mode::Accepted, n, cap}; }
};

struct AbcResult {
  WeightedParticles particles;
  std::vector<double> accepted_deltas;
  std::uint64_t simulations = 0;
  std::uint64_t proposals = 0;
  std::size_t accepted = 0;
  double acceptance_rate() const {
    return proposals ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0;
  }
};

/// Prior draws kept when Delta < h, equally weighted. Throws BudgetExhausted
/// when nothing (or too little, in Accepted mode) is accepted.
AbcResult abc_rejection(const DiscrepancyModel& model, const Distribution& prior, double h,
                        const AbcStop& stop, Stream& rng, std::size_t workers = 1);

/// Mixture centred on the particles with twice their weighted covariance
/// (diagonal floored at 1e-8 * width^2).
GaussianMixture mixture_from_particles(const WeightedParticles& particles, const Box& bounds);

struct PmcConfig {
  std::size_t generations = 3;
  std::size_t target_accepted = 1000;
  std::uint64_t simulation_cap = 10000000;  // per generation
  /// Explicit schedule (one per generation); when empty, thresholds are
  /// quantiles: of `initial_simulations` prior-predictive discrepancies for
  /// the first generation, then of the previous generation's accepted ones.
  std::vector<double> thresholds;
  double quantile = 0.1;
  std::size_t initial_simulations = 1000;
  std::size_t workers = 1;
};

struct PmcGeneration {
  WeightedParticles particles;
  double threshold = 0.0;
  std::uint64_t simulations = 0;
  std::uint64_t proposals = 0;
  std::size_t accepted = 0;
  std::vector<double> accepted_deltas;
};

struct PmcResult {
  std::vector<PmcGeneration> generations;
  std::uint64_t initial_simulations = 0;
  std::uint64_t total_simulations() const;
};

PmcResult pmc_abc(const DiscrepancyModel& model, const Distribution& prior, const Box& bounds,
                  const PmcConfig& config, Stream& rng);

/// Purely model-based: iterations of mixture importance sampling, the first
/// mixture centred on the acquired parameters with uniform weights. Never
/// calls a simulator.
WeightedParticles iterative_model_based_is(const LogLikelihood& log_lik,
                                           const std::vector<ParamVector>& acquired,
                                           const Distribution& prior, const Box& bounds,
                                           std::size_t iterations, std::size_t m, Stream& rng,
                                           std::size_t workers = 1);

struct McmcConfig {
  std::size_t iterations = 10000;
  std::vector<double> proposal_sd;
  /// Coordinates random-walked on the log scale.
  std::vector<bool> log_scale;
  double burn_in_fraction = 0.25;
  ParamVector start;
};

struct McmcChain {
  std::size_t dims = 0;
  std::vector<double> samples;  // row-major (iterations + 1) x d, starting state first
  std::vector<double> loglik;
  std::size_t accepted = 0;
  std::size_t proposals = 0;
  std::size_t rejected_singular = 0;
  std::size_t rejected_prior = 0;
  std::size_t burn_in = 0;
  std::uint64_t simulations = 0;

  std::size_t length() const { return dims ? samples.size() / dims : 0; }
  double acceptance_rate() const {
    return proposals ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0;
  }
  /// Post-burn-in states as equally weighted particles.
  WeightedParticles posterior() const;
};

/// Random-walk Metropolis on a fresh synthetic log-likelihood estimate per
/// proposal (the current state's estimate is kept, not refreshed).
McmcChain rw_metropolis_synthetic(const SyntheticLikelihoodModel& model, const Distribution& prior,
                                  const McmcConfig& config, Stream& rng);

}  // namespace bolfi

#pragma once

// Bayesian optimization of the discrepancy: Sobol initialization, lower
// confidence bound acquisition (deterministic or stochastic), optional prior
// modulation, evidence growth with periodic hyperparameter refits, and the
// regression-function estimate J-hat.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bolfi/distributions.hpp"
#include "bolfi/gp.hpp"
#include "bolfi/models.hpp"
#include "bolfi/optimize.hpp"
#include "bolfi/rng.hpp"

namespace bolfi {

enum class AcquisitionRule { Deterministic, Stochastic };

struct AcquisitionConfig {
  double epsilon_eta = 0.1;
  AcquisitionRule rule = AcquisitionRule::Stochastic;
  double rel_tolerance = 0.01;
  std::size_t batch_size = 1;
  std::size_t t0 = 10;
  std::size_t T = 50;
  /// When set, mu is replaced by mu - 2 log p(theta).
  std::shared_ptr<const Distribution> prior_modulation;
  std::size_t multistart = 32;
  std::size_t probe_per_dim = 64;

  void validate() const;
};

/// eta_t^2 = 2 log(t^(d/2 + 2) pi^2 / (3 eps)).
double eta_sq(std::size_t t, std::size_t d, double epsilon_eta);

/// A_t(theta) = mu~ - sqrt(eta_t^2 v_t(theta)); +inf where a modulating prior vanishes.
double acquisition_value(const GpPosterior& gp, std::span<const double> theta, std::size_t t,
                         const AcquisitionConfig& config);

/// Same, also filling the gradient.
double acquisition_value_grad(const GpPosterior& gp, std::span<const double> theta, std::size_t t,
                              const AcquisitionConfig& config, std::span<double> grad);

/// Multi-start minimization of A_t from Sobol points plus an optional incumbent.
BoxMinimum minimize_acquisition(const GpPosterior& gp, const Box& bounds, std::size_t t,
                                const AcquisitionConfig& config,
                                const ParamVector* incumbent = nullptr);

struct StochasticProposal {
  BoxMinimum minimizer;
  double acq_max = 0.0;
  double tolerance_level = 0.0;  // A_min + rel_tol * (A_max - A_min)
  std::vector<double> stds;
  std::vector<ParamVector> draws;  // batch_size points, clamped to bounds
};

StochasticProposal stochastic_propose(const GpPosterior& gp, const Box& bounds, std::size_t t,
                                      const AcquisitionConfig& config, Stream& rng,
                                      const ParamVector* incumbent = nullptr);

struct BoConfig {
  Box bounds;
  AcquisitionConfig acquisition;
  ResponseTransform response;
  MeanFunction::Kind mean_kind = MeanFunction::Kind::Constant;
  std::size_t refit_every = 10;
  std::size_t initial_fit_starts = 5;
  std::size_t refit_starts = 1;
  std::size_t fit_max_evals = 400;
  std::size_t max_retries = 10;
  std::size_t workers = 1;
  /// Skip hyperparameter learning and use these throughout.
  std::optional<GpHyperparams> fixed_hyperparams;
};

struct AcquisitionRecord {
  std::size_t t = 0;  // evidence size when the proposal was made
  std::size_t batch_index = 0;
  ParamVector proposed;
  ParamVector minimizer;
  double acq_min = 0.0;
  double acq_max = 0.0;
  double eta_sq = 0.0;
  std::vector<double> stds;  // empty under the deterministic rule
  ParamVector offset;        // proposed - minimizer
  unsigned retries = 0;
};

struct HyperRecord {
  std::size_t t = 0;
  GpHyperparams hyper;
  double score = 0.0;
  bool improved = false;
};

struct FailureRecord {
  std::size_t t = 0;
  ParamVector theta;
  std::string message;
};

struct BoState {
  Evidence evidence;                  // transformed responses f
  std::vector<double> discrepancies;  // raw Delta values, same order
  GpPosterior gp;
  std::vector<HyperRecord> hyper_history;
  std::vector<AcquisitionRecord> log;
  std::vector<FailureRecord> failures;
  std::uint64_t simulations = 0;  // discrepancy evaluations that succeeded or failed
  std::uint64_t datasets = 0;
};

/// Runs the full loop until the evidence holds T tuples.
BoState run_bolfi(const DiscrepancyModel& model, const BoConfig& config, std::uint64_t master_seed);

/// J-hat: mu (direct) or exp(mu + (v + sigma_n^2) / 2) (log), plus the offset.
double estimate_j(const GpPosterior& gp, std::span<const double> theta, const ResponseTransform& response);

/// Minimizer of J-hat (of mu + v/2 in log mode).
BoxMinimum argmin_jhat(const GpPosterior& gp, const Box& bounds, const ResponseTransform& response,
                       std::size_t multistart = 32);

}  // namespace bolfi

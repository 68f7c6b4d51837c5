#pragma once

// Approximate-likelihood constructions: sample-average synthetic likelihood,
// kernel (nonparametric) estimates, the Gaussian-kernel discrepancy and its
// exact relation to the synthetic likelihood, and the GP model-based
// uniform-kernel likelihood.

#include <Eigen/Core>
#include <span>
#include <vector>

#include "bolfi/gp.hpp"
#include "bolfi/models.hpp"

namespace bolfi {

/// Sample mean and 1/N-normalized covariance of N summary vectors.
struct SyntheticFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t replicates = 0;
};

SyntheticFit sample_mean_cov(std::span<const SummaryStats> stats);
/// Rows of `stats` are the N replicates.
SyntheticFit sample_mean_cov(const Eigen::MatrixXd& stats);

/// Cholesky factor of a symmetric matrix. Tries the matrix as given, then
/// with 1e-10 * trace / p added to the diagonal, then ten times that; throws
/// NotPositiveDefinite after that. `jitter_used` reports the added amount.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& a, double* jitter_used = nullptr);

/// Gaussian log-density of phi_o under (fit.mean, fit.cov).
double synthetic_loglik(const SyntheticFit& fit, std::span<const double> phi_o);

struct KernelSpec {
  enum class Kind { Uniform, Gaussian };
  Kind kind = Kind::Uniform;
  double bandwidth = 1.0;     // h, uniform kernel
  double scale = 1.0;         // c, uniform kernel
  std::size_t stat_dims = 1;  // p, Gaussian kernel (discrepancies are Delta^g values)

  static KernelSpec uniform(double h, double c = 1.0) { return {Kind::Uniform, h, c, 1}; }
  static KernelSpec gaussian(std::size_t p) { return {Kind::Gaussian, 1.0, 1.0, p}; }
};

/// kappa(u) for the given kernel.
double kernel_value(const KernelSpec& kernel, double u);

/// E^N[kappa(Delta)]; for the uniform kernel c * #{Delta < h} / N.
double kernel_lik_sample(std::span<const double> discrepancies, const KernelSpec& kernel);

/// log|det C| + (phi_o - phi)^T C^{-1} (phi_o - phi).
double gaussian_kernel_discrepancy(std::span<const double> phi_o, std::span<const double> phi,
                                   const Eigen::MatrixXd& c);

/// Bandwidth rule for the Gaussian-kernel objective: a fixed matrix, or the
/// sample covariance of the batch itself.
struct BandwidthRule {
  bool use_sample_cov = true;
  Eigen::MatrixXd fixed;

  static BandwidthRule sample_covariance() { return {true, {}}; }
  static BandwidthRule fixed_matrix(Eigen::MatrixXd c) { return {false, std::move(c)}; }
};

/// E^N[Delta^g] over a batch of simulated summaries.
double jg_sample(std::span<const SummaryStats> phis, std::span<const double> phi_o,
                 const BandwidthRule& rule);

struct Proposition1Check {
  double synthetic_loglik;  // lhs
  double rhs;               // p/2 - p/2 log(2 pi) - Jg/2
  double residual;          // |lhs - rhs|
  double log_kernel_lik;    // log E^N[K_g(phi_o - phi)], C = sample covariance
  double bound_slack;       // log_kernel_lik - (-p/2 + synthetic_loglik), >= 0
};

Proposition1Check verify_proposition1(std::span<const SummaryStats> phis,
                                      std::span<const double> phi_o);

/// Uniform-kernel likelihood under the GP model of the (log-)discrepancy:
/// F((h' - mu) / sqrt(v + sigma_n^2)) with h' = h or log(h - offset).
double model_based_lu(const GpPosterior& gp, std::span<const double> theta, double h,
                      const ResponseTransform& response);
/// log of model_based_lu, accurate in the lower tail.
double log_model_based_lu(const GpPosterior& gp, std::span<const double> theta, double h,
                          const ResponseTransform& response);

/// Threshold from the modelled predictive distribution at a point:
/// the q-quantile of the normal (direct) or shifted log-normal (log) response.
double threshold_at(const PosteriorPoint& at_minimizer, const ResponseTransform& response, double q);

/// Threshold as the linear-interpolation q-quantile of sampled discrepancies.
double threshold_from_sample(std::span<const double> discrepancies, double q);

/// Delta = -l_s^N(theta): negative synthetic log-likelihood from N fresh
/// replicates. One call consumes N simulated data sets.
class SyntheticLikelihoodModel : public DiscrepancyModel {
public:
  SyntheticLikelihoodModel(StatsSimulator sim, SummaryStats observed, std::size_t dims,
                           std::size_t replicates);
  std::size_t dims() const override { return dims_; }
  std::size_t datasets_per_call() const override { return replicates_; }
  std::size_t replicates() const { return replicates_; }

  /// Simulates N replicates without touching the call counters.
  SyntheticFit fit_at(std::span<const double> theta, Stream& rng) const;

protected:
  double discrepancy(std::span<const double> theta, Stream& rng) const override;

private:
  StatsSimulator sim_;
  SummaryStats observed_;
  std::size_t dims_;
  std::size_t replicates_;
};

}  // namespace bolfi

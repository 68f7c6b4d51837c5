#pragma once

// Gaussian-process regression of discrepancies on parameters: squared
// exponential covariance, constant or axis-quadratic mean, Cholesky-factored
// Gram matrix with bounded jitter escalation, leave-one-out hyperparameter
// fitting.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bolfi/models.hpp"

namespace bolfi {

/// How a raw discrepancy becomes the GP response f.
struct ResponseTransform {
  enum class Mode { Direct, Log };
  Mode mode = Mode::Direct;
  /// Log mode models log(max(Delta - offset, floor)).
  double offset = 0.0;
  static constexpr double kFloor = 1e-12;

  bool is_log() const { return mode == Mode::Log; }
  double forward(double delta) const;
  static ResponseTransform direct() { return {Mode::Direct, 0.0}; }
  static ResponseTransform log(double offset = 0.0) { return {Mode::Log, offset}; }
};

/// m(theta) = sum_j a_j theta_j^2 + b_j theta_j + c, or the constant c.
struct MeanFunction {
  enum class Kind { Constant, Quadratic };
  Kind kind = Kind::Constant;
  std::vector<double> a;
  std::vector<double> b;
  double c = 0.0;

  double value(std::span<const double> theta) const;
  /// Adds dm/dtheta to `grad`.
  void add_gradient(std::span<const double> theta, std::span<double> grad) const;

  static MeanFunction constant(double c) { return {Kind::Constant, {}, {}, c}; }
  static MeanFunction quadratic(std::vector<double> a, std::vector<double> b, double c) {
    return {Kind::Quadratic, std::move(a), std::move(b), c};
  }
};

struct GpHyperparams {
  double signal_variance = 1.0;
  std::vector<double> length_scales;
  double noise_variance = 0.0;
  MeanFunction mean;

  std::size_t dims() const { return length_scales.size(); }
  /// Throws std::invalid_argument on non-positive scales or negative a_j.
  void validate() const;
};

/// Ordered (theta, response) training tuples.
class Evidence {
public:
  explicit Evidence(std::size_t dims = 0) : dims_(dims) {}

  void append(std::span<const double> theta, double response);
  std::size_t size() const { return responses_.size(); }
  std::size_t dims() const { return dims_; }
  std::span<const double> theta(std::size_t i) const {
    return {thetas_.data() + i * dims_, dims_};
  }
  double response(std::size_t i) const { return responses_[i]; }
  const std::vector<double>& responses() const { return responses_; }
  /// Row-major t x d.
  const std::vector<double>& thetas() const { return thetas_; }

private:
  std::size_t dims_;
  std::vector<double> thetas_;
  std::vector<double> responses_;
};

struct PosteriorPoint {
  double mean = 0.0;
  double var_latent = 0.0;
  double var_obs = 0.0;
};

struct PosteriorGradient {
  PosteriorPoint value;
  std::vector<double> d_mean;
  std::vector<double> d_var;  // of the latent variance
};

/// Immutable GP posterior over a fixed evidence set.
class GpPosterior {
public:
  GpPosterior() = default;

  /// Throws IllConditioned when even 1e-4 * sigma_f^2 jitter does not help.
  /// `refine` enables extended-precision refinement of alpha when the factor
  /// is ill-conditioned; callers that only use the factor can skip it.
  static GpPosterior build(const Evidence& evidence, const GpHyperparams& hp, bool refine = true);

  /// Posterior after appending one tuple, reusing the existing factor
  /// (falls back to a full rebuild when the update is numerically unsafe).
  GpPosterior extended(std::span<const double> theta, double response) const;

  PosteriorPoint at(std::span<const double> theta) const;
  PosteriorGradient at_with_gradient(std::span<const double> theta) const;

  /// Column-major m x d points; fills mean and latent variance.
  void at_batch(const Eigen::MatrixXd& points, std::span<double> mean,
                std::span<double> var_latent) const;

  double kernel(std::span<const double> a, std::span<const double> b) const;

  const GpHyperparams& hyperparams() const { return hp_; }
  std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
  std::size_t dims() const { return hp_.dims(); }
  double jitter() const { return jitter_; }
  /// Training inputs, column-major t x d.
  const Eigen::MatrixXd& inputs() const { return x_; }
  const Eigen::VectorXd& responses() const { return y_; }
  /// Lower Cholesky factor of K_t + jitter * I.
  const Eigen::MatrixXd& factor() const { return l_; }
  /// K_t^{-1} (f_t - m_t).
  const Eigen::VectorXd& alpha() const { return alpha_; }

private:
  void kernel_column(std::span<const double> theta, double* out) const;
  void refresh_alpha(bool refine = true);
  long double kernel_dot_extended(std::span<const double> theta) const;

  GpHyperparams hp_;
  std::vector<double> inv_len_sq_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd l_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
  bool extended_ = false;  // ill-conditioned factor: mean via extended precision
  std::vector<long double> alpha_ext_;
};

/// Sum over i of log N(f_i; mu_{-i}, v_{-i} + sigma_n^2) computed from the
/// inverse Gram matrix.
double loo_log_predictive(const Evidence& evidence, const GpHyperparams& hp);

struct FitOptions {
  MeanFunction::Kind mean_kind = MeanFunction::Kind::Constant;
  /// Quasi-random restarts in addition to the initial hyperparameters.
  std::size_t sobol_starts = 5;
  std::size_t max_evals_per_start = 400;
  /// Box used to scale length-scale bounds (parameter box widths).
  Box bounds;
};

struct FitResult {
  GpHyperparams hyper;
  double score = 0.0;
  double init_score = 0.0;
  /// False when no start beat the initial hyperparameters (init returned).
  bool improved = false;
  std::size_t evaluations = 0;
};

/// Maximizes the leave-one-out score with multi-start Nelder-Mead over a
/// bounded log-parameterization.
FitResult fit_hyperparameters(const Evidence& evidence, const GpHyperparams& init,
                              const FitOptions& options);

/// Reasonable starting hyperparameters from the data.
GpHyperparams default_hyperparams(const Evidence& evidence, const Box& bounds,
                                  MeanFunction::Kind kind);

}  // namespace bolfi

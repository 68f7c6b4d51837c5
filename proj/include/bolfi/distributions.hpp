#pragma once

// Densities that can be both sampled and evaluated: priors and importance
// proposals.

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "bolfi/models.hpp"
#include "bolfi/rng.hpp"

namespace bolfi {

class Distribution {
public:
  virtual ~Distribution() = default;
  virtual std::size_t dims() const = 0;
  /// log density; -inf outside the support.
  virtual double log_pdf(std::span<const double> theta) const = 0;
  virtual ParamVector sample(Stream& rng) const = 0;
  /// d log p / d theta. The default uses central differences.
  virtual void log_pdf_gradient(std::span<const double> theta, std::span<double> grad) const;
};

class UniformBox : public Distribution {
public:
  explicit UniformBox(Box box);
  std::size_t dims() const override { return box_.dims(); }
  double log_pdf(std::span<const double> theta) const override;
  ParamVector sample(Stream& rng) const override;
  void log_pdf_gradient(std::span<const double> theta, std::span<double> grad) const override;
  const Box& box() const { return box_; }

private:
  Box box_;
  double log_volume_;
};

/// Independent normal coordinates, optionally truncated to a box.
class DiagonalGaussian : public Distribution {
public:
  DiagonalGaussian(std::vector<double> mean, std::vector<double> sd, std::optional<Box> truncation = {});
  std::size_t dims() const override { return mean_.size(); }
  double log_pdf(std::span<const double> theta) const override;
  ParamVector sample(Stream& rng) const override;
  void log_pdf_gradient(std::span<const double> theta, std::span<double> grad) const override;

private:
  std::vector<double> mean_, sd_;
  std::optional<Box> box_;
  double log_norm_;
};

/// Gaussian mixture with a shared covariance matrix. Component densities are
/// evaluated in whitened coordinates with the vectorized distance and exp
/// kernels.
class GaussianMixture : public Distribution {
public:
  /// centers: row-major M x d.
  GaussianMixture(std::vector<double> centers, std::vector<double> weights, Eigen::MatrixXd cov);
  std::size_t dims() const override { return d_; }
  std::size_t components() const { return weights_.size(); }
  double log_pdf(std::span<const double> theta) const override;
  ParamVector sample(Stream& rng) const override;
  const Eigen::MatrixXd& covariance() const { return cov_; }
  std::span<const double> center(std::size_t k) const { return {centers_.data() + k * d_, d_}; }
  const std::vector<double>& weights() const { return weights_; }

private:
  std::size_t d_;
  std::vector<double> centers_;
  std::vector<double> weights_;
  std::vector<double> cum_weights_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  std::vector<double> white_cols_;  // whitened centers, column-major M x d
  std::vector<double> ones_;
  double log_norm_;
};

}  // namespace bolfi

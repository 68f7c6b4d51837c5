#include "bolfi/distributions.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "bolfi/errors.hpp"
#include "bolfi/simd.hpp"

namespace bolfi {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

void Distribution::log_pdf_gradient(std::span<const double> theta, std::span<double> grad) const {
  std::vector<double> x(theta.begin(), theta.end());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
    const double x0 = x[j];
    x[j] = x0 + h;
    const double fp = log_pdf(x);
    x[j] = x0 - h;
    const double fm = log_pdf(x);
    x[j] = x0;
    grad[j] = (std::isfinite(fp) && std::isfinite(fm)) ? (fp - fm) / (2.0 * h) : 0.0;
  }
}

// ---- UniformBox ------------------------------------------------------------

UniformBox::UniformBox(Box box) : box_(std::move(box)), log_volume_(0.0) {
  for (std::size_t j = 0; j < box_.dims(); ++j) log_volume_ += std::log(box_.width(j));
}

double UniformBox::log_pdf(std::span<const double> theta) const {
  return box_.contains(theta) ? -log_volume_ : kNegInf;
}

ParamVector UniformBox::sample(Stream& rng) const {
  ParamVector x(box_.dims());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = box_.lower[j] + rng.uniform() * box_.width(j);
  return x;
}

void UniformBox::log_pdf_gradient(std::span<const double>, std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
}

// ---- DiagonalGaussian ------------------------------------------------------

DiagonalGaussian::DiagonalGaussian(std::vector<double> mean, std::vector<double> sd,
                                   std::optional<Box> truncation)
    : mean_(std::move(mean)), sd_(std::move(sd)), box_(std::move(truncation)), log_norm_(0.0) {
  if (mean_.size() != sd_.size() || mean_.empty()) throw std::invalid_argument("DiagonalGaussian: shape mismatch");
  for (std::size_t j = 0; j < sd_.size(); ++j) {
    if (!(sd_[j] > 0.0)) throw std::invalid_argument("DiagonalGaussian: sd must be positive");
    log_norm_ -= 0.5 * kLog2Pi + std::log(sd_[j]);
    if (box_) {
      const double zl = (box_->lower[j] - mean_[j]) / sd_[j];
      const double zu = (box_->upper[j] - mean_[j]) / sd_[j];
      const double mass = 0.5 * (std::erfc(-zu / std::sqrt(2.0)) - std::erfc(-zl / std::sqrt(2.0)));
      if (!(mass > 0.0)) throw std::invalid_argument("DiagonalGaussian: truncation box has no mass");
      log_norm_ -= std::log(mass);
    }
  }
}

double DiagonalGaussian::log_pdf(std::span<const double> theta) const {
  if (box_ && !box_->contains(theta)) return kNegInf;
  double s = log_norm_;
  for (std::size_t j = 0; j < mean_.size(); ++j) {
    const double z = (theta[j] - mean_[j]) / sd_[j];
    s -= 0.5 * z * z;
  }
  return s;
}

ParamVector DiagonalGaussian::sample(Stream& rng) const {
  std::normal_distribution<double> nd(0.0, 1.0);
  ParamVector x(mean_.size());
  for (int attempt = 0; attempt < 100000; ++attempt) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = mean_[j] + sd_[j] * nd(rng);
    if (!box_ || box_->contains(x)) return x;
  }
  throw std::runtime_error("DiagonalGaussian: truncated sampling did not terminate");
}

void DiagonalGaussian::log_pdf_gradient(std::span<const double> theta, std::span<double> grad) const {
  for (std::size_t j = 0; j < mean_.size(); ++j) grad[j] = -(theta[j] - mean_[j]) / (sd_[j] * sd_[j]);
}

// ---- GaussianMixture -------------------------------------------------------

GaussianMixture::GaussianMixture(std::vector<double> centers, std::vector<double> weights,
                                 Eigen::MatrixXd cov)
    : d_(static_cast<std::size_t>(cov.rows())),
      centers_(std::move(centers)),
      weights_(std::move(weights)),
      cov_(std::move(cov)) {
  const std::size_t m = weights_.size();
  if (m == 0 || d_ == 0 || centers_.size() != m * d_ || cov_.cols() != cov_.rows()) {
    throw std::invalid_argument("GaussianMixture: shape mismatch");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw std::invalid_argument("GaussianMixture: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("GaussianMixture: zero total weight");
  cum_weights_.resize(m);
  double acc = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    weights_[k] /= total;
    acc += weights_[k];
    cum_weights_[k] = acc;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("mixture covariance is not positive definite");
  chol_ = llt.matrixL();
  log_norm_ = -0.5 * static_cast<double>(d_) * kLog2Pi;
  for (std::size_t j = 0; j < d_; ++j) log_norm_ -= std::log(chol_(j, j));

  white_cols_.resize(m * d_);
  Eigen::VectorXd c(static_cast<Eigen::Index>(d_));
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t j = 0; j < d_; ++j) c[j] = centers_[k * d_ + j];
    chol_.triangularView<Eigen::Lower>().solveInPlace(c);
    for (std::size_t j = 0; j < d_; ++j) white_cols_[j * m + k] = c[j];
  }
  ones_.assign(d_, 1.0);
}

double GaussianMixture::log_pdf(std::span<const double> theta) const {
  const std::size_t m = weights_.size();
  Eigen::VectorXd z(static_cast<Eigen::Index>(d_));
  for (std::size_t j = 0; j < d_; ++j) z[j] = theta[j];
  chol_.triangularView<Eigen::Lower>().solveInPlace(z);
  const auto& kt = simd::active();
  std::vector<double> d2(m);
  kt.scaled_sq_dist(white_cols_.data(), m, d_, m, z.data(), ones_.data(), d2.data());
  const double dmin = *std::min_element(d2.begin(), d2.end());
  const double s = kt.exp_affine_dot(d2.data(), weights_.data(), -0.5, 0.5 * dmin, m);
  return log_norm_ - 0.5 * dmin + std::log(s);
}

ParamVector GaussianMixture::sample(Stream& rng) const {
  const double u = rng.uniform();
  auto it = std::upper_bound(cum_weights_.begin(), cum_weights_.end(), u);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cum_weights_.begin()),
                                              weights_.size() - 1);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd e(static_cast<Eigen::Index>(d_));
  for (std::size_t j = 0; j < d_; ++j) e[j] = nd(rng);
  const Eigen::VectorXd x = chol_ * e;
  ParamVector out(d_);
  for (std::size_t j = 0; j < d_; ++j) out[j] = centers_[k * d_ + j] + x[j];
  return out;
}

}  // namespace bolfi

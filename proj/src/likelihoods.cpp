#include "bolfi/likelihoods.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bolfi/errors.hpp"
#include "bolfi/numeric.hpp"

namespace bolfi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::Map<const Eigen::VectorXd> as_vec(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

bool try_llt(const Eigen::MatrixXd& a, Eigen::MatrixXd& l) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) return false;
  }
  return true;
}

double log_det_from_factor(const Eigen::MatrixXd& l) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

// Quadratic form d^T (L L^T)^{-1} d.
double quad_from_factor(const Eigen::MatrixXd& l, const Eigen::VectorXd& d) {
  Eigen::VectorXd z = l.triangularView<Eigen::Lower>().solve(d);
  return z.squaredNorm();
}

}  // namespace

SyntheticFit sample_mean_cov(const Eigen::MatrixXd& stats) {
  const Eigen::Index n = stats.rows();
  if (n < 2) throw std::invalid_argument("sample_mean_cov needs at least 2 replicates");
  SyntheticFit fit;
  fit.replicates = static_cast<std::size_t>(n);
  fit.mean = stats.colwise().mean().transpose();
  Eigen::MatrixXd centered = stats.rowwise() - fit.mean.transpose();
  fit.cov = (centered.transpose() * centered) / static_cast<double>(n);
  return fit;
}

SyntheticFit sample_mean_cov(std::span<const SummaryStats> stats) {
  if (stats.size() < 2) throw std::invalid_argument("sample_mean_cov needs at least 2 replicates");
  const std::size_t p = stats.front().phi.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(stats.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats[i].phi.size() != p) throw std::invalid_argument("summary dimension mismatch");
    for (std::size_t j = 0; j < p; ++j) m(i, j) = stats[i].phi[j];
  }
  return sample_mean_cov(m);
}

Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& a, double* jitter_used) {
  if (a.rows() != a.cols() || a.rows() == 0) throw std::invalid_argument("cholesky: matrix not square");
  Eigen::MatrixXd l;
  if (try_llt(a, l)) {
    if (jitter_used) *jitter_used = 0.0;
    return l;
  }
  const double p = static_cast<double>(a.rows());
  const double base = 1e-10 * std::abs(a.trace()) / p;
  if (base > 0.0) {
    for (double j : {base, 10.0 * base}) {
      Eigen::MatrixXd b = a;
      b.diagonal().array() += j;
      if (try_llt(b, l)) {
        if (jitter_used) *jitter_used = j;
        return l;
      }
    }
  }
  throw NotPositiveDefinite("covariance matrix is not positive definite after jitter");
}

double synthetic_loglik(const SyntheticFit& fit, std::span<const double> phi_o) {
  const auto p = fit.mean.size();
  if (static_cast<std::size_t>(p) != phi_o.size()) throw std::invalid_argument("summary dimension mismatch");
  const Eigen::MatrixXd l = cholesky_with_jitter(fit.cov);
  const Eigen::VectorXd d = as_vec(phi_o) - fit.mean;
  return -0.5 * static_cast<double>(p) * kLog2Pi - 0.5 * log_det_from_factor(l) -
         0.5 * quad_from_factor(l, d);
}

double kernel_value(const KernelSpec& kernel, double u) {
  switch (kernel.kind) {
    case KernelSpec::Kind::Uniform:
      return (u >= 0.0 && u < kernel.bandwidth) ? kernel.scale : 0.0;
    case KernelSpec::Kind::Gaussian:
      return std::exp(-0.5 * static_cast<double>(kernel.stat_dims) * kLog2Pi - 0.5 * u);
  }
  return 0.0;
}

double kernel_lik_sample(std::span<const double> discrepancies, const KernelSpec& kernel) {
  if (discrepancies.empty()) throw std::invalid_argument("kernel_lik_sample: empty sample");
  if (kernel.kind == KernelSpec::Kind::Uniform) {
    if (!(kernel.bandwidth > 0.0)) throw std::invalid_argument("uniform kernel needs h > 0");
    std::size_t hits = 0;
    for (double d : discrepancies) hits += (d < kernel.bandwidth) ? 1 : 0;
    return kernel.scale * static_cast<double>(hits) / static_cast<double>(discrepancies.size());
  }
  double s = 0.0;
  for (double d : discrepancies) s += kernel_value(kernel, d);
  return s / static_cast<double>(discrepancies.size());
}

double gaussian_kernel_discrepancy(std::span<const double> phi_o, std::span<const double> phi,
                                   const Eigen::MatrixXd& c) {
  if (phi_o.size() != phi.size() || static_cast<std::size_t>(c.rows()) != phi.size()) {
    throw std::invalid_argument("gaussian_kernel_discrepancy: dimension mismatch");
  }
  Eigen::MatrixXd l;
  if (!try_llt(c, l)) throw NotPositiveDefinite("bandwidth matrix is not positive definite");
  const Eigen::VectorXd d = as_vec(phi_o) - as_vec(phi);
  return log_det_from_factor(l) + quad_from_factor(l, d);
}

double jg_sample(std::span<const SummaryStats> phis, std::span<const double> phi_o,
                 const BandwidthRule& rule) {
  if (phis.empty()) throw std::invalid_argument("jg_sample: empty batch");
  Eigen::MatrixXd l;
  if (rule.use_sample_cov) {
    l = cholesky_with_jitter(sample_mean_cov(phis).cov);
  } else if (!try_llt(rule.fixed, l)) {
    throw NotPositiveDefinite("bandwidth matrix is not positive definite");
  }
  const double log_det = log_det_from_factor(l);
  double s = 0.0;
  for (const auto& st : phis) {
    if (st.phi.size() != phi_o.size()) throw std::invalid_argument("summary dimension mismatch");
    const Eigen::VectorXd d = as_vec(phi_o) - as_vec(st.phi);
    s += log_det + quad_from_factor(l, d);
  }
  return s / static_cast<double>(phis.size());
}

Proposition1Check verify_proposition1(std::span<const SummaryStats> phis,
                                      std::span<const double> phi_o) {
  const SyntheticFit fit = sample_mean_cov(phis);
  const double p = static_cast<double>(phi_o.size());
  const Eigen::MatrixXd l = cholesky_with_jitter(fit.cov);
  const double log_det = log_det_from_factor(l);

  Proposition1Check out{};
  out.synthetic_loglik = -0.5 * p * kLog2Pi - 0.5 * log_det -
                         0.5 * quad_from_factor(l, as_vec(phi_o) - fit.mean);

  std::vector<double> log_terms;
  log_terms.reserve(phis.size());
  double jg = 0.0;
  for (const auto& st : phis) {
    const double dg = log_det + quad_from_factor(l, as_vec(phi_o) - as_vec(st.phi));
    jg += dg;
    log_terms.push_back(-0.5 * p * kLog2Pi - 0.5 * dg);
  }
  jg /= static_cast<double>(phis.size());
  out.rhs = 0.5 * p - 0.5 * p * kLog2Pi - 0.5 * jg;
  out.residual = std::abs(out.synthetic_loglik - out.rhs);
  out.log_kernel_lik = log_sum_exp(log_terms) - std::log(static_cast<double>(phis.size()));
  out.bound_slack = out.log_kernel_lik - (-0.5 * p + out.synthetic_loglik);
  return out;
}

double model_based_lu(const GpPosterior& gp, std::span<const double> theta, double h,
                      const ResponseTransform& response) {
  if (!(h > 0.0)) throw std::invalid_argument("model_based_lu: h must be positive");
  const PosteriorPoint pt = gp.at(theta);
  double level = h;
  if (response.is_log()) {
    if (h <= response.offset) return 0.0;
    level = std::log(h - response.offset);
  }
  const double sd = std::sqrt(pt.var_obs);
  if (sd == 0.0) return level > pt.mean ? 1.0 : (level == pt.mean ? 0.5 : 0.0);
  return normal_cdf((level - pt.mean) / sd);
}

double log_model_based_lu(const GpPosterior& gp, std::span<const double> theta, double h,
                          const ResponseTransform& response) {
  if (!(h > 0.0)) throw std::invalid_argument("model_based_lu: h must be positive");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double level = h;
  if (response.is_log()) {
    if (h <= response.offset) return kNegInf;
    level = std::log(h - response.offset);
  }
  const PosteriorPoint pt = gp.at(theta);
  const double sd = std::sqrt(pt.var_obs);
  if (sd == 0.0) return level > pt.mean ? 0.0 : (level == pt.mean ? std::log(0.5) : kNegInf);
  return normal_log_cdf((level - pt.mean) / sd);
}

double threshold_at(const PosteriorPoint& at_minimizer, const ResponseTransform& response,
                    double q) {
  const double z = normal_quantile(q);
  const double f = at_minimizer.mean + z * std::sqrt(at_minimizer.var_obs);
  const double h = response.is_log() ? response.offset + std::exp(f) : f;
  if (!(h > 0.0)) throw std::domain_error("modelled threshold is not positive");
  return h;
}

double threshold_from_sample(std::span<const double> discrepancies, double q) {
  if (discrepancies.empty()) throw std::invalid_argument("threshold_from_sample: empty sample");
  return quantile_linear(discrepancies, q);
}

SyntheticLikelihoodModel::SyntheticLikelihoodModel(StatsSimulator sim, SummaryStats observed,
                                                   std::size_t dims, std::size_t replicates)
    : sim_(std::move(sim)), observed_(std::move(observed)), dims_(dims), replicates_(replicates) {
  if (replicates_ < 2) throw std::invalid_argument("synthetic likelihood needs N >= 2");
}

SyntheticFit SyntheticLikelihoodModel::fit_at(std::span<const double> theta, Stream& rng) const {
  const std::size_t p = observed_.phi.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(replicates_), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < replicates_; ++i) {
    Stream sub = rng.child("replicate", i);
    const SummaryStats st = sim_(theta, sub);
    if (st.phi.size() != p) throw std::invalid_argument("summary dimension mismatch");
    for (std::size_t j = 0; j < p; ++j) m(i, j) = st.phi[j];
  }
  return sample_mean_cov(m);
}

double SyntheticLikelihoodModel::discrepancy(std::span<const double> theta, Stream& rng) const {
  return -synthetic_loglik(fit_at(theta, rng), observed_.phi);
}

}  // namespace bolfi

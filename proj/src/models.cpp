#include "bolfi/models.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "bolfi/errors.hpp"
#include "bolfi/likelihoods.hpp"
#include "bolfi/numeric.hpp"
#include "bolfi/simd.hpp"

namespace bolfi {

Box::Box(std::vector<double> lo, std::vector<double> hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.empty() || lower.size() != upper.size()) {
    throw std::invalid_argument("Box: lower and upper bounds must be non-empty and of equal length");
  }
  for (std::size_t j = 0; j < lower.size(); ++j) {
    if (!(lower[j] < upper[j])) {
      throw std::invalid_argument("Box: lower bound must be strictly below upper bound in dimension " +
                                  std::to_string(j));
    }
  }
}

bool Box::contains(std::span<const double> theta) const {
  if (theta.size() != dims()) return false;
  for (std::size_t j = 0; j < dims(); ++j) {
    if (theta[j] < lower[j] || theta[j] > upper[j]) return false;
  }
  return true;
}

ParamVector Box::clamp(std::span<const double> theta) const {
  ParamVector out(theta.begin(), theta.end());
  for (std::size_t j = 0; j < dims(); ++j) out[j] = std::clamp(out[j], lower[j], upper[j]);
  return out;
}

ParamVector Box::from_unit(std::span<const double> u) const {
  ParamVector out(dims());
  for (std::size_t j = 0; j < dims(); ++j) out[j] = lower[j] + u[j] * width(j);
  return out;
}

// ---- Gaussian ---------------------------------------------------------------

DataSet simulate_gaussian(double theta, std::size_t n, Stream& rng) {
  if (n == 0) throw std::invalid_argument("simulate_gaussian: n must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> noise(n);
  for (auto& w : noise) w = normal(rng);
  return gaussian_from_noise(theta, noise);
}

DataSet gaussian_from_noise(double theta, std::span<const double> noise) {
  DataSet out;
  out.values.reserve(noise.size());
  for (double w : noise) out.values.push_back(theta + w);
  return out;
}

SummaryStats summarize_gaussian(const DataSet& data) {
  if (data.values.empty()) throw std::invalid_argument("summarize_gaussian: empty data set");
  return {{simd::sum(data.values) / static_cast<double>(data.values.size())}, false};
}

double discrepancy_gaussian(const SummaryStats& phi_o, const SummaryStats& phi_t) {
  if (phi_o.phi.size() != 1 || phi_t.phi.size() != 1) {
    throw std::invalid_argument("discrepancy_gaussian: both summaries must be scalar");
  }
  const double d = phi_o.phi[0] - phi_t.phi[0];
  return d * d;
}

double oracle_lu_gaussian(double theta, double phi_o, std::size_t n, double h) {
  if (!(h > 0.0) || n == 0) throw std::invalid_argument("oracle_lu_gaussian: need h > 0, n >= 1");
  const double rn = std::sqrt(static_cast<double>(n));
  const double centre = rn * (phi_o - theta);
  const double half = std::sqrt(static_cast<double>(n) * h);
  const double a = centre + half;
  const double b = centre - half;
  // Upper-tail form when both ends are positive, to avoid 1 - 1 cancellation.
  if (b > 0.0) return normal_cdf(-b) - normal_cdf(-a);
  return normal_cdf(a) - normal_cdf(b);
}

// ---- Ricker -----------------------------------------------------------------

std::vector<double> ricker_latent_path(double log_r, double sigma,
                                       std::span<const double> innovations) {
  std::vector<double> path;
  path.reserve(innovations.size());
  double log_n = 0.0;  // N^(0) = 1
  double pop = 1.0;
  for (std::size_t t = 0; t < innovations.size(); ++t) {
    log_n = log_r + log_n - pop + sigma * innovations[t];
    pop = std::exp(log_n);
    if (std::isnan(log_n) || !std::isfinite(pop)) {
      std::ostringstream msg;
      msg << "ricker: non-finite latent state at t=" << (t + 1) << " (log N=" << log_n << ")";
      throw SimulationError(msg.str());
    }
    path.push_back(pop);
  }
  return path;
}

DataSet simulate_ricker(const RickerParams& params, std::size_t n, std::size_t burn_in,
                        Stream& rng, std::vector<double>* latent) {
  if (n == 0) throw std::invalid_argument("simulate_ricker: n must be >= 1");
  if (!(params.sigma >= 0.0) || !(params.phi > 0.0)) {
    throw std::invalid_argument("simulate_ricker: need sigma >= 0 and phi > 0");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> innovations(burn_in + n);
  for (auto& e : innovations) e = normal(rng);
  const std::vector<double> path = ricker_latent_path(params.log_r, params.sigma, innovations);

  DataSet out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rate = params.phi * path[burn_in + i];
    if (rate > 0.0) {
      std::poisson_distribution<long long> poisson(rate);
      out.values[i] = static_cast<double>(poisson(rng));
    } else {
      out.values[i] = 0.0;
    }
  }
  if (latent) latent->assign(path.begin() + static_cast<std::ptrdiff_t>(burn_in), path.end());
  return out;
}

const std::array<std::string, kRickerStatCount>& ricker_stat_names() {
  static const std::array<std::string, kRickerStatCount> names = {
      "mean",      "n_zeros",  "acov_lag1", "acov_lag2", "acov_lag3",
      "acov_lag4", "acov_lag5", "ar_const", "ar_lin",    "ar_quad",
      "diff_lin",  "diff_quad", "diff_cubic"};
  return names;
}

namespace {

// Least-squares coefficients via column-pivoting QR; false (and zeros) when the design
// is numerically rank deficient.
bool least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
                   Eigen::VectorXd& coeffs) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) {
    coeffs = Eigen::VectorXd::Zero(design.cols());
    return false;
  }
  coeffs = qr.solve(target);
  return true;
}

}  // namespace

SummaryStats summarize_ricker(const DataSet& data) {
  const auto& y = data.values;
  const std::size_t n = y.size();
  if (n < 20) throw std::invalid_argument("summarize_ricker: need at least 20 observations");

  SummaryStats out;
  out.phi.reserve(kRickerStatCount);
  const double ybar = simd::sum(y) / static_cast<double>(n);
  out.phi.push_back(ybar);
  out.phi.push_back(static_cast<double>(std::count(y.begin(), y.end(), 0.0)));

  std::vector<double> centred(n);
  for (std::size_t t = 0; t < n; ++t) centred[t] = y[t] - ybar;
  for (std::size_t lag = 1; lag <= 5; ++lag) {
    const double s = simd::active().dot(centred.data(), centred.data() + lag, n - lag);
    out.phi.push_back(s / static_cast<double>(n));
  }

  // y_{t+1}^0.3 ~ 1 + y_t^0.3 + y_t^0.6
  {
    const std::size_t m = n - 1;
    Eigen::MatrixXd design(m, 3);
    Eigen::VectorXd target(m);
    for (std::size_t t = 0; t < m; ++t) {
      const double z = std::pow(y[t], 0.3);
      design(t, 0) = 1.0;
      design(t, 1) = z;
      design(t, 2) = z * z;
      target(t) = std::pow(y[t + 1], 0.3);
    }
    Eigen::VectorXd beta;
    if (!least_squares(design, target, beta)) out.degenerate = true;
    for (int k = 0; k < 3; ++k) out.phi.push_back(beta(k));
  }

  // sorted first differences ~ cubic in the rescaled order index u in [-1, 1]
  {
    const std::size_t m = n - 1;
    std::vector<double> diffs(m);
    for (std::size_t t = 0; t < m; ++t) diffs[t] = y[t + 1] - y[t];
    std::sort(diffs.begin(), diffs.end());
    Eigen::MatrixXd design(m, 4);
    Eigen::VectorXd target(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double u = 2.0 * static_cast<double>(i) / static_cast<double>(m - 1) - 1.0;
      design(i, 0) = 1.0;
      design(i, 1) = u;
      design(i, 2) = u * u;
      design(i, 3) = u * u * u;
      target(i) = diffs[i];
    }
    Eigen::VectorXd beta;
    if (!least_squares(design, target, beta)) out.degenerate = true;
    for (int k = 1; k < 4; ++k) out.phi.push_back(beta(k));
  }
  return out;
}

// ---- discrepancies ----------------------------------------------------------

double discrepancy_from_stats(const SummaryStats& phi_o, const SummaryStats& phi_t,
                              const DiscrepancyMode& mode) {
  const std::size_t p = phi_o.phi.size();
  if (p == 0 || phi_t.phi.size() != p) {
    throw std::invalid_argument("discrepancy_from_stats: summary dimension mismatch");
  }
  switch (mode.kind) {
    case DiscrepancyMode::Kind::SquaredL2: {
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += (phi_o.phi[k] - phi_t.phi[k]) * (phi_o.phi[k] - phi_t.phi[k]);
      return s;
    }
    case DiscrepancyMode::Kind::L1Normalized: {
      double s = 0.0;
      for (std::size_t k = 0; k < p; ++k) s += std::abs(phi_o.phi[k] - phi_t.phi[k]);
      return s / static_cast<double>(p);
    }
    case DiscrepancyMode::Kind::GaussianKernel:
      return gaussian_kernel_discrepancy(phi_o.phi, phi_t.phi, mode.bandwidth);
  }
  throw std::logic_error("discrepancy_from_stats: unknown mode");
}

// ---- composed simulators ----------------------------------------------------

StatsSimulator gaussian_stats_simulator(std::size_t n) {
  return [n](std::span<const double> theta, Stream& rng) {
    return summarize_gaussian(simulate_gaussian(theta[0], n, rng));
  };
}

StatsSimulator ricker_stats_simulator(std::size_t n, std::size_t burn_in) {
  return [n, burn_in](std::span<const double> theta, Stream& rng) {
    return summarize_ricker(simulate_ricker({theta[0], theta[1], theta[2]}, n, burn_in, rng));
  };
}

ParamVector ParameterMap::expand(std::span<const double> free) const {
  if (free.size() != free_indices.size()) {
    throw std::invalid_argument("ParameterMap: expected " + std::to_string(free_indices.size()) +
                                " free coordinates");
  }
  ParamVector full = fixed_values;
  for (std::size_t k = 0; k < free_indices.size(); ++k) full[free_indices[k]] = free[k];
  return full;
}

ParameterMap ParameterMap::all_free(std::vector<std::string> names) {
  ParameterMap map;
  map.fixed_values.assign(names.size(), 0.0);
  for (std::size_t k = 0; k < names.size(); ++k) map.free_indices.push_back(k);
  map.names = std::move(names);
  return map;
}

StatsSimulator restrict_simulator(StatsSimulator full, ParameterMap map) {
  return [full = std::move(full), map = std::move(map)](std::span<const double> theta, Stream& rng) {
    const ParamVector expanded = map.expand(theta);
    return full(expanded, rng);
  };
}

double DiscrepancyModel::evaluate(std::span<const double> theta, Stream& rng) const {
  calls_.fetch_add(1);
  datasets_.fetch_add(datasets_per_call());
  return discrepancy(theta, rng);
}

StatsDiscrepancyModel::StatsDiscrepancyModel(StatsSimulator sim, SummaryStats observed,
                                             std::size_t dims, DiscrepancyMode mode)
    : sim_(std::move(sim)), observed_(std::move(observed)), dims_(dims), mode_(std::move(mode)) {}

double StatsDiscrepancyModel::discrepancy(std::span<const double> theta, Stream& rng) const {
  return discrepancy_from_stats(observed_, sim_(theta, rng), mode_);
}

std::unique_ptr<DiscrepancyModel> make_gaussian_discrepancy(double phi_o, std::size_t n) {
  return std::make_unique<StatsDiscrepancyModel>(gaussian_stats_simulator(n), SummaryStats{{phi_o}, false},
                                                 1, DiscrepancyMode::squared_l2());
}

}  // namespace bolfi

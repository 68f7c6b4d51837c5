#pragma once

// Built-in simulators (Gaussian mean, stochastic Ricker map), their summary
// statistics and discrepancies, plus the closed-form acceptance probability
// of the Gaussian model used as a test oracle.

#include <Eigen/Core>
#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bolfi/rng.hpp"

namespace bolfi {

using ParamVector = std::vector<double>;

/// Axis-aligned parameter box.
struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  Box() = default;
  Box(std::vector<double> lo, std::vector<double> hi);

  std::size_t dims() const { return lower.size(); }
  double width(std::size_t j) const { return upper[j] - lower[j]; }
  bool contains(std::span<const double> theta) const;
  ParamVector clamp(std::span<const double> theta) const;
  /// Affine map from the unit cube.
  ParamVector from_unit(std::span<const double> u) const;
};

struct DataSet {
  std::vector<double> values;
};

struct SummaryStats {
  std::vector<double> phi;
  /// Set when a regression-type statistic fell back to its degenerate value.
  bool degenerate = false;
};

// ---- Gaussian mean model -------------------------------------------------

DataSet simulate_gaussian(double theta, std::size_t n, Stream& rng);
/// theta + noise, for callers that hold the random quantities fixed.
DataSet gaussian_from_noise(double theta, std::span<const double> noise);
SummaryStats summarize_gaussian(const DataSet& data);
/// Squared difference of the two sample means.
double discrepancy_gaussian(const SummaryStats& phi_o, const SummaryStats& phi_t);

/// Limiting acceptance probability P((phi_o - Phi_theta)^2 < h) with
/// Phi_theta ~ N(theta, 1/n).
double oracle_lu_gaussian(double theta, double phi_o, std::size_t n, double h);

// ---- Ricker model --------------------------------------------------------

struct RickerParams {
  double log_r;
  double sigma;
  double phi;
};

/// Latent population sizes N^(1..innovations.size()) of the stochastic Ricker
/// map started at N^(0) = 1.
std::vector<double> ricker_latent_path(double log_r, double sigma,
                                       std::span<const double> innovations);

/// Returns the n counts observed after `burn_in` latent steps.
DataSet simulate_ricker(const RickerParams& params, std::size_t n, std::size_t burn_in,
                        Stream& rng, std::vector<double>* latent = nullptr);

inline constexpr std::size_t kRickerStatCount = 13;
inline constexpr const char* kRickerStatSetVersion = "ricker-stats-v1";
const std::array<std::string, kRickerStatCount>& ricker_stat_names();

/// Fixed 13-statistic reduction: mean, number of zeros, autocovariances at
/// lags 1-5, power-transformed autoregression coefficients (3) and cubic-fit
/// coefficients of the sorted first differences (3).
SummaryStats summarize_ricker(const DataSet& data);

// ---- Discrepancies on summary statistics ----------------------------------

struct DiscrepancyMode {
  enum class Kind { SquaredL2, L1Normalized, GaussianKernel };
  Kind kind = Kind::SquaredL2;
  Eigen::MatrixXd bandwidth;  // only for GaussianKernel

  static DiscrepancyMode squared_l2() { return {Kind::SquaredL2, {}}; }
  static DiscrepancyMode l1_normalized() { return {Kind::L1Normalized, {}}; }
  static DiscrepancyMode gaussian_kernel(Eigen::MatrixXd c) { return {Kind::GaussianKernel, std::move(c)}; }
};

double discrepancy_from_stats(const SummaryStats& phi_o, const SummaryStats& phi_t,
                              const DiscrepancyMode& mode);

// ---- Composed simulators ------------------------------------------------

/// Simulate-and-summarize at a full parameter vector.
using StatsSimulator = std::function<SummaryStats(std::span<const double> theta, Stream& rng)>;

StatsSimulator gaussian_stats_simulator(std::size_t n);
/// theta = (log r, sigma, phi).
StatsSimulator ricker_stats_simulator(std::size_t n, std::size_t burn_in);

/// Maps the free (inferred) coordinates into a full parameter vector whose
/// remaining coordinates stay at fixed values.
struct ParameterMap {
  std::vector<std::string> names;
  std::vector<double> fixed_values;
  std::vector<std::size_t> free_indices;

  std::size_t free_dims() const { return free_indices.size(); }
  ParamVector expand(std::span<const double> free) const;
  static ParameterMap all_free(std::vector<std::string> names);
};

StatsSimulator restrict_simulator(StatsSimulator full, ParameterMap map);

/// A simulator composed with a discrepancy: one call draws one discrepancy
/// realization. Calls are counted (the budget ledger reads these counters).
class DiscrepancyModel {
public:
  virtual ~DiscrepancyModel() = default;

  double evaluate(std::span<const double> theta, Stream& rng) const;

  virtual std::size_t dims() const = 0;
  /// Simulated data sets consumed per call.
  virtual std::size_t datasets_per_call() const { return 1; }

  std::uint64_t calls() const { return calls_.load(); }
  std::uint64_t datasets() const { return datasets_.load(); }
  void reset_counters() const {
    calls_ = 0;
    datasets_ = 0;
  }

protected:
  virtual double discrepancy(std::span<const double> theta, Stream& rng) const = 0;

private:
  mutable std::atomic<std::uint64_t> calls_{0};
  mutable std::atomic<std::uint64_t> datasets_{0};
};

/// Delta_theta = D(Phi_o, Phi_theta) for a single simulated data set.
class StatsDiscrepancyModel : public DiscrepancyModel {
public:
  StatsDiscrepancyModel(StatsSimulator sim, SummaryStats observed, std::size_t dims,
                        DiscrepancyMode mode);
  std::size_t dims() const override { return dims_; }
  const SummaryStats& observed() const { return observed_; }

protected:
  double discrepancy(std::span<const double> theta, Stream& rng) const override;

private:
  StatsSimulator sim_;
  SummaryStats observed_;
  std::size_t dims_;
  DiscrepancyMode mode_;
};

/// Gaussian model discrepancy (Phi_o - Phi_theta)^2 with theta scalar.
std::unique_ptr<DiscrepancyModel> make_gaussian_discrepancy(double phi_o, std::size_t n);

}  // namespace bolfi

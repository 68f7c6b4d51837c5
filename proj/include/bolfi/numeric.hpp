#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace bolfi {

/// Standard-normal cdf.
double normal_cdf(double x);
/// Standard-normal log-cdf, accurate in the lower tail.
double normal_log_cdf(double x);
/// Standard-normal quantile, p in (0, 1).
double normal_quantile(double p);

/// Sample quantile with linear interpolation between order statistics
/// (position q * (n - 1) in the sorted sample).
double quantile_linear(std::span<const double> sample, double q);

/// Inverse of the weighted empirical cdf: the smallest value whose cumulative
/// (normalized) weight reaches q.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q);

double log_sum_exp(std::span<const double> values);

double mean(std::span<const double> x);
/// Population variance (1/n).
double variance(std::span<const double> x);

/// Mean distance from each point to its nearest other point; points are rows
/// of a row-major n x d array, distances scaled by `scale` per coordinate.
double mean_nearest_neighbor_distance(std::span<const double> points, std::size_t dims,
                                      std::span<const double> scale = {});

}  // namespace bolfi

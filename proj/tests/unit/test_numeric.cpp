#include <doctest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "bolfi/numeric.hpp"
#include "bolfi/rng.hpp"

using namespace bolfi;

TEST_SUITE("numeric") {

TEST_CASE("linear-interpolation quantile") {
  const std::vector<double> v{10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
  CHECK(quantile_linear(v, 0.1) == doctest::Approx(1.9).epsilon(1e-14));
  CHECK(quantile_linear(v, 0.0) == 1.0);
  CHECK(quantile_linear(v, 1.0) == 10.0);
  CHECK(quantile_linear(v, 0.5) == doctest::Approx(5.5));
  const std::vector<double> one{3.0};
  CHECK(quantile_linear(one, 0.3) == 3.0);
}

TEST_CASE("weighted quantile inverts the weighted cdf") {
  const std::vector<double> v{3, 1, 2};
  const std::vector<double> w{1, 1, 2};
  CHECK(weighted_quantile(v, w, 0.25) == 1.0);
  CHECK(weighted_quantile(v, w, 0.5) == 2.0);
  CHECK(weighted_quantile(v, w, 0.76) == 3.0);
}

TEST_CASE("normal functions") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
  CHECK(normal_quantile(0.05) == doctest::Approx(-1.6448536269514722).epsilon(1e-12));
  const boost::math::normal nd;
  for (double x : {-30.0, -10.0, -3.0, -0.5, 0.0, 1.0, 4.0}) {
    CAPTURE(x);
    CHECK(normal_log_cdf(x) == doctest::Approx(std::log(boost::math::cdf(nd, x))).epsilon(1e-10));
  }
  // far tail: log F(x) ~ -x^2/2 - log(-x) - log sqrt(2 pi)
  CHECK(std::isfinite(normal_log_cdf(-60.0)));
  CHECK(normal_log_cdf(-60.0) == doctest::Approx(-1800.0 - std::log(60.0) - 0.5 * std::log(2 * M_PI)).epsilon(1e-6));
  for (double p : {1e-10, 0.01, 0.3, 0.5, 0.9, 1 - 1e-9}) CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
}

TEST_CASE("log_sum_exp") {
  const std::vector<double> v{1000.0, 1000.0};
  CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)));
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> w{-inf, -inf};
  CHECK(log_sum_exp(w) == -inf);
}

TEST_CASE("mean, population variance and nearest neighbours") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(mean(v) == 2.5);
  CHECK(variance(v) == doctest::Approx(1.25));
  // 1-D points 0, 1, 3: nearest distances 1, 1, 2
  const std::vector<double> p{0, 1, 3};
  CHECK(mean_nearest_neighbor_distance(p, 1) == doctest::Approx(4.0 / 3.0));
  // 2-D, second coordinate divided by 2
  const std::vector<double> q{0, 0, 0, 2};
  const std::vector<double> sc{1, 2};
  CHECK(mean_nearest_neighbor_distance(q, 2, sc) == doctest::Approx(1.0));
}

}

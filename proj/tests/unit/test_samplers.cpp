#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "bolfi/distributions.hpp"
#include "bolfi/errors.hpp"
#include "bolfi/models.hpp"
#include "bolfi/numeric.hpp"
#include "bolfi/samplers.hpp"

using namespace bolfi;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Mean of a 1-D density proportional to f on [a, b] (Simpson's rule).
template <class F>
double density_mean(F f, double a, double b, int n = 20000) {
  double z = 0.0, m = 0.0;
  const double h = (b - a) / n;
  for (int i = 0; i <= n; ++i) {
    const double x = a + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    z += w * f(x);
    m += w * x * f(x);
  }
  return m / z;
}

double mc_error(const WeightedParticles& p) { return p.sd()[0] / std::sqrt(p.ess()); }

}  // namespace

TEST_SUITE("samplers") {

TEST_CASE("weights normalize and degenerate sets are reported") {
  const auto p = particles_from_log_weights(1, {0.0, 1.0, 2.0}, std::vector<double>{0.0, std::log(3.0), kNegInf});
  CHECK(p.weights[0] == doctest::Approx(0.25));
  CHECK(p.weights[1] == doctest::Approx(0.75));
  CHECK(p.weights[2] == 0.0);
  CHECK(p.ess() == doctest::Approx(1.0 / (0.0625 + 0.5625)));
  CHECK(p.mean()[0] == doctest::Approx(0.75));
  CHECK_THROWS_AS(particles_from_log_weights(1, {0.0}, std::vector<double>{kNegInf}), DegeneratePosterior);
  // extreme but finite log weights
  const auto q = particles_from_log_weights(1, {0.0, 1.0}, std::vector<double>{-1e5, -1e5 - std::log(2.0)});
  CHECK(q.weights[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("importance sampling: flat and single-particle cases") {
  const UniformBox prior(Box({0.0}, {1.0}));
  Stream rng(1, "is");
  const auto flat = importance_posterior([](std::span<const double>) { return -3.0; }, prior, prior, 50, rng);
  for (double w : flat.weights) CHECK(w == doctest::Approx(1.0 / 50));

  Stream r2(2, "is");
  const auto all = importance_posterior([](std::span<const double>) { return 0.0; }, prior, prior, 40, r2);
  const double pick = all.thetas[17];
  Stream r3(2, "is");
  const auto one = importance_posterior(
      [pick](std::span<const double> th) { return th[0] == pick ? 0.0 : kNegInf; }, prior, prior, 40, r3);
  CHECK(one.weights[17] == 1.0);
  CHECK(one.ess() == doctest::Approx(1.0));
}

TEST_CASE("importance sampling with the closed-form likelihood") {
  const std::size_t n = 10;
  const double phi_o = 0.9, h = 0.1, a = -1.0, b = 3.0;
  const UniformBox prior(Box({a}, {b}));
  Stream rng(3, "is-oracle");
  const auto post = importance_posterior(
      [&](std::span<const double> th) { return std::log(oracle_lu_gaussian(th[0], phi_o, n, h)); }, prior, prior,
      20000, rng);
  const double truth = density_mean([&](double x) { return oracle_lu_gaussian(x, phi_o, n, h); }, a, b);
  CHECK(std::abs(post.mean()[0] - truth) <= 3.0 * mc_error(post));
}

TEST_CASE("uniform-kernel weights") {
  const UniformBox prior(Box({0.0}, {3.0}));
  // acceptances 2/1/0 of N = 2
  const std::vector<std::vector<double>> d{{0.1, 0.2}, {0.1, 5.0}, {4.0, 5.0}};
  const auto w = uniform_kernel_weights(1, {0.5, 1.5, 2.5}, d, 1.0, prior, prior);
  CHECK(w.weights[0] == doctest::Approx(2.0 / 3.0));
  CHECK(w.weights[1] == doctest::Approx(1.0 / 3.0));
  CHECK(w.weights[2] == 0.0);
  // c cancels
  const auto w7 = uniform_kernel_weights(1, {0.5, 1.5, 2.5}, d, 1.0, prior, prior, 7.3);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(w7.weights[i] - w.weights[i]) <= 1e-12);
  // all accepted: uniform
  const std::vector<std::vector<double>> all{{0.1}, {0.2}, {0.3}};
  const auto u = uniform_kernel_weights(1, {0.5, 1.5, 2.5}, all, 1.0, prior, prior);
  for (double x : u.weights) CHECK(x == doctest::Approx(1.0 / 3.0));
  // N = 1, q = prior: an indicator
  const std::vector<std::vector<double>> single{{0.1}, {2.0}, {0.3}};
  const auto ind = uniform_kernel_weights(1, {0.5, 1.5, 2.5}, single, 1.0, prior, prior);
  CHECK(ind.weights == std::vector<double>{0.5, 0.0, 0.5});
  const std::vector<std::vector<double>> none{{9.0}, {9.0}, {9.0}};
  CHECK_THROWS_AS(uniform_kernel_weights(1, {0.5, 1.5, 2.5}, none, 1.0, prior, prior), DegeneratePosterior);
}

TEST_CASE("ABC rejection paths") {
  auto model = make_gaussian_discrepancy(0.4, 10);
  const UniformBox prior(Box({-2.0}, {2.0}));
  Stream rng(4, "abc");
  const auto all = abc_rejection(*model, prior, 1e300, AbcStop::proposals(300), rng);
  CHECK(all.accepted == 300);
  CHECK(all.simulations == 300);
  for (double w : all.particles.weights) CHECK(w == doctest::Approx(1.0 / 300));

  Stream r2(5, "abc");
  CHECK_THROWS_AS(abc_rejection(*model, prior, 1e-300, AbcStop::proposals(200), r2), BudgetExhausted);
  Stream r3(6, "abc");
  CHECK_THROWS_AS(abc_rejection(*model, prior, 1e-6, AbcStop::accepted(100, 500), r3), BudgetExhausted);

  Stream r4(7, "abc");
  const auto acc = abc_rejection(*model, prior, 0.1, AbcStop::accepted(50, 100000), r4);
  CHECK(acc.accepted == 50);
  CHECK(acc.particles.size() == 50);
  for (double dl : acc.accepted_deltas) CHECK(dl < 0.1);
}

TEST_CASE("ABC acceptance rate at the observed mean matches the closed form") {
  const std::size_t n = 10;
  const double phi_o = 0.4, h = 0.1;  // sqrt(n h) = 1
  auto model = make_gaussian_discrepancy(phi_o, n);
  const UniformBox point(Box({phi_o - 1e-9}, {phi_o + 1e-9}));  // effectively a point mass
  Stream rng(8, "abc-rate");
  const std::size_t m = 20000;
  const auto r = abc_rejection(*model, point, h, AbcStop::proposals(m), rng);
  const double p = oracle_lu_gaussian(phi_o, phi_o, n, h);
  CHECK(std::abs(r.acceptance_rate() - p) <= 3.0 * std::sqrt(p * (1 - p) / m));
}

TEST_CASE("ABC rejection does not depend on the worker count") {
  auto model = make_gaussian_discrepancy(0.4, 10);
  const UniformBox prior(Box({-2.0}, {2.0}));
  Stream a(9, "w"), b(9, "w");
  const auto r1 = abc_rejection(*model, prior, 0.05, AbcStop::accepted(40, 100000), a, 1);
  const auto r2 = abc_rejection(*model, prior, 0.05, AbcStop::accepted(40, 100000), b, 3);
  CHECK(r1.particles.thetas == r2.particles.thetas);
  CHECK(r1.proposals == r2.proposals);
}

TEST_CASE("one PMC generation is ABC rejection") {
  auto model = make_gaussian_discrepancy(0.4, 10);
  const Box box({-2.0}, {2.0});
  const UniformBox prior(box);
  PmcConfig cfg;
  cfg.generations = 1;
  cfg.target_accepted = 80;
  cfg.thresholds = {0.05};
  Stream a(10, "pmc");
  const auto pmc = pmc_abc(*model, prior, box, cfg, a);
  Stream b(10, "pmc");
  const auto abc = abc_rejection(*model, prior, 0.05, AbcStop::accepted(80, cfg.simulation_cap), b);
  REQUIRE(pmc.generations.size() == 1);
  CHECK(pmc.generations[0].particles.thetas == abc.particles.thetas);
  CHECK(pmc.generations[0].simulations == abc.simulations);
  CHECK(pmc.total_simulations() == abc.simulations);
}

TEST_CASE("PMC-ABC on the gaussian model") {
  const std::size_t n = 10;
  const double phi_o = 0.7;
  auto model = make_gaussian_discrepancy(phi_o, n);
  const Box box({-5.0}, {5.0});
  const UniformBox prior(box);
  PmcConfig cfg;
  cfg.generations = 3;
  cfg.target_accepted = 1000;
  cfg.quantile = 0.1;
  cfg.initial_simulations = 2000;
  Stream rng(11, "pmc-g");
  const auto r = pmc_abc(*model, prior, box, cfg, rng);
  REQUIRE(r.generations.size() == 3);
  for (std::size_t g = 1; g < 3; ++g) CHECK(r.generations[g].threshold <= r.generations[g - 1].threshold);
  const auto& last = r.generations.back();
  const double h = last.threshold;
  const double truth = density_mean([&](double x) { return oracle_lu_gaussian(x, phi_o, n, h); }, -5.0, 5.0);
  CHECK(std::abs(last.particles.mean()[0] - truth) <= 3.0 * mc_error(last.particles));

  // single-stage rejection at the final threshold: expected cost target / P(accept)
  double accept = 0.0;
  const int grid = 20000;
  for (int i = 0; i < grid; ++i) accept += oracle_lu_gaussian(-5.0 + 10.0 * (i + 0.5) / grid, phi_o, n, h) / grid;
  CHECK(static_cast<double>(r.total_simulations()) < cfg.target_accepted / accept);
}

TEST_CASE("mixture from a single particle uses the covariance floor") {
  WeightedParticles p;
  p.dims = 2;
  p.thetas = {1.0, 2.0};
  p.weights = {1.0};
  const Box box({0.0, 0.0}, {10.0, 4.0});
  const auto q = mixture_from_particles(p, box);
  CHECK(q.components() == 1);
  CHECK(q.covariance()(0, 0) == doctest::Approx(1e-8 * 100.0));
  CHECK(q.covariance()(1, 1) == doctest::Approx(1e-8 * 16.0));
  Stream rng(1, "mix");
  const auto x = q.sample(rng);
  CHECK(std::abs(x[0] - 1.0) < 1e-2);
}

TEST_CASE("mixture density matches a direct evaluation") {
  const Eigen::Matrix2d cov = (Eigen::Matrix2d() << 0.5, 0.1, 0.1, 0.3).finished();
  const GaussianMixture q({0.0, 0.0, 1.0, -1.0}, {0.3, 0.7}, cov);
  const std::vector<double> x{0.4, -0.2};
  double ref = 0.0;
  const double c[2][2] = {{0.0, 0.0}, {1.0, -1.0}};
  const double w[2] = {0.3, 0.7};
  for (int k = 0; k < 2; ++k) {
    const Eigen::Vector2d d(x[0] - c[k][0], x[1] - c[k][1]);
    ref += w[k] * std::exp(-0.5 * d.dot(cov.inverse() * d)) / (2 * M_PI * std::sqrt(cov.determinant()));
  }
  CHECK(q.log_pdf(x) == doctest::Approx(std::log(ref)).epsilon(1e-12));
}

TEST_CASE("model-based IS with a constant likelihood returns the prior") {
  const Box box({-1.0}, {1.0});
  const UniformBox prior(box);
  Stream rng(12, "imb");
  const std::vector<ParamVector> acq{{-0.5}, {0.0}, {0.5}, {0.9}};
  const auto p = iterative_model_based_is([](std::span<const double>) { return 0.0; }, acq, prior, box, 3, 20000,
                                          rng);
  // weights are p/q; the weighted mean is the prior mean
  CHECK(std::abs(p.mean()[0]) <= 3.0 * mc_error(p));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.weights[i] > 0.0) CHECK(box.contains(p.theta(i)));
  }
  CHECK_THROWS_AS(iterative_model_based_is([](std::span<const double>) { return 0.0; }, {{0.0}}, prior, box, 3,
                                           10, rng),
                  std::invalid_argument);
}

TEST_CASE("metropolis: zero proposal spread never moves") {
  SyntheticLikelihoodModel model(gaussian_stats_simulator(10), {{0.5}}, 1, 20);
  const UniformBox prior(Box({-3.0}, {3.0}));
  McmcConfig cfg;
  cfg.iterations = 200;
  cfg.proposal_sd = {0.0};
  cfg.start = {1.25};
  Stream rng(13, "mh");
  const auto chain = rw_metropolis_synthetic(model, prior, cfg, rng);
  CHECK(chain.length() == 201);
  for (double x : chain.samples) CHECK(x == 1.25);
  CHECK(chain.burn_in == 50);
  CHECK(chain.posterior().size() == 151);
}

TEST_CASE("metropolis on the gaussian synthetic likelihood") {
  const double phi_o = 0.5;
  SyntheticLikelihoodModel model(gaussian_stats_simulator(10), {{phi_o}}, 1, 50);
  const UniformBox prior(Box({-3.0}, {3.0}));
  McmcConfig cfg;
  cfg.iterations = 6000;
  cfg.proposal_sd = {0.4};
  cfg.start = {0.0};
  Stream rng(14, "mh-g");
  const auto chain = rw_metropolis_synthetic(model, prior, cfg, rng);
  const auto post = chain.posterior();
  // the chain is correlated; allow for an effective size of a tenth of the draws
  const double err = post.sd()[0] / std::sqrt(post.size() / 10.0);
  CHECK(std::abs(post.mean()[0] - phi_o) <= 3.0 * err);
  CHECK(chain.acceptance_rate() > 0.1);
  CHECK(chain.simulations == 6001 - chain.rejected_prior);
}

TEST_CASE("metropolis on a log scale stays positive") {
  SyntheticLikelihoodModel model(gaussian_stats_simulator(10), {{0.5}}, 1, 20);
  const UniformBox prior(Box({0.0}, {3.0}));
  McmcConfig cfg;
  cfg.iterations = 500;
  cfg.proposal_sd = {0.5};
  cfg.log_scale = {true};
  cfg.start = {1.0};
  Stream rng(15, "mh-log");
  const auto chain = rw_metropolis_synthetic(model, prior, cfg, rng);
  for (double x : chain.samples) CHECK(x > 0.0);
  cfg.start = {-1.0};
  CHECK_THROWS_AS(rw_metropolis_synthetic(model, prior, cfg, rng), std::invalid_argument);
}

}

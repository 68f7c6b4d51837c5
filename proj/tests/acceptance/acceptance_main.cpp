// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <random>
#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "bolfi/harness/config.hpp"
#include "bolfi/harness/experiment.hpp"
#include "bolfi/io.hpp"
#include "bolfi/likelihoods.hpp"
#include "bolfi/models.hpp"
#include "bolfi/samplers.hpp"
#include "bolfi/simd.hpp"
#include "unit/oracles.hpp"

using namespace bolfi;
using namespace bolfi::harness;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const fs::path kConfigs = BOLFI_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "bolfi_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunOptions under(const fs::path& root) {
  RunOptions o;
  o.output_root = root;
  return o;
}

// Minimal reader for the run-directory CSVs (no quoting is ever written).
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  explicit Csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) f.push_back(cell);
      if (line.back() == ',') f.emplace_back();
      if (first) header = std::move(f); else rows.push_back(std::move(f));
      first = false;
    }
  }
  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("no column " + name);
  }
  std::vector<double> numbers(const std::string& name) const {
    const std::size_t c = col(name);
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(std::stod(r[c]));
    return out;
  }
};

ExperimentConfig with_seeds(const fs::path& file, std::uint64_t seed, std::uint64_t obs_seed,
                            std::function<void(json&)> edit = {}) {
  json doc = json::parse(read_file(file));
  doc["seed"] = seed;
  doc["model"]["observed"]["seed"] = obs_seed;
  if (edit) edit(doc);
  return parse_config(doc);
}

std::uint64_t stage_sims(const RunResult& r, const std::string& stage) {
  for (const auto& s : r.stages)
    if (s.stage == stage) return s.simulations;
  return ~0ull;
}

std::vector<SummaryStats> random_batch(Stream& s, std::size_t n, std::size_t p) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd mix(p, p);
  for (auto& v : mix.reshaped()) v = 2.0 * s.uniform() - 1.0;
  Eigen::VectorXd shift(p);
  for (auto& v : shift) v = 4.0 * s.uniform() - 2.0;
  std::vector<SummaryStats> out(n);
  for (auto& st : out) {
    Eigen::VectorXd z(p);
    for (auto& v : z) v = nd(s);
    const Eigen::VectorXd x = shift + mix * z + 0.3 * z;
    st.phi.assign(x.data(), x.data() + p);
  }
  return out;
}

// Statistics and observation drawn from one Gaussian with a random rotation
// and eigenvalues log-uniform in [0.1, 10], so log-likelihoods stay O(p).
std::vector<SummaryStats> model_batch(Stream& s, std::size_t n, std::size_t p, std::vector<double>& phi_o) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd g(p, p);
  for (auto& v : g.reshaped()) v = nd(s);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Eigen::VectorXd root(p), mu(p);
  for (auto& v : root) v = std::sqrt(std::exp(std::log(0.1) + std::log(100.0) * s.uniform()));
  for (auto& v : mu) v = 4.0 * s.uniform() - 2.0;
  auto draw = [&] {
    Eigen::VectorXd z(p);
    for (auto& v : z) v = nd(s);
    const Eigen::VectorXd x = mu + q * root.cwiseProduct(z);
    return std::vector<double>(x.data(), x.data() + p);
  };
  std::vector<SummaryStats> out(n);
  for (auto& st : out) st.phi = draw();
  phi_o = draw();
  return out;
}

// ---------------------------------------------------------------------------

Outcome identity_between_synthetic_and_kernel_likelihoods() {
  Stream s(2024, "acceptance/prop1");
  const std::size_t ps[] = {1, 2, 3, 5};
  double worst = 0.0, worst_cross = 0.0, min_slack = INFINITY;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t p = ps[inst % 4];
    const std::size_t n = p + 1 + static_cast<std::size_t>(s.uniform() * static_cast<double>(50 - p));
    std::vector<double> phi_o;
    const auto batch = model_batch(s, n, p, phi_o);
    const auto r = verify_proposition1(batch, phi_o);
    worst = std::max(worst, r.residual);
    min_slack = std::min(min_slack, r.bound_slack);

    // Independent route: dense inverse and determinant of the 1/N covariance.
    Eigen::MatrixXd m(n, p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) m(i, j) = batch[i].phi[j];
    const Eigen::VectorXd mu = m.colwise().mean();
    const Eigen::MatrixXd c = m.rowwise() - mu.transpose();
    const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(n);
    const Eigen::Map<const Eigen::VectorXd> xo(phi_o.data(), p);
    const double lhs = oracle::mvn_logpdf(xo, mu, cov);
    const Eigen::MatrixXd inv = cov.inverse();
    double jg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd d = xo - m.row(i).transpose();
      jg += std::log(cov.determinant()) + d.dot(inv * d);
    }
    jg /= static_cast<double>(n);
    const double pp = static_cast<double>(p);
    const double rhs = pp / 2 - pp / 2 * std::log(2 * std::numbers::pi) - jg / 2;
    worst_cross = std::max(worst_cross, std::abs(lhs - rhs));
  }
  // Stress: observation far outside thin simulated clouds; log-likelihoods
  // reach 1e9 in magnitude, so only the relative residual is meaningful.
  double worst_rel = 0.0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t p = ps[inst % 4];
    const std::size_t n = p + 1 + static_cast<std::size_t>(s.uniform() * static_cast<double>(50 - p));
    const auto batch = random_batch(s, n, p);
    std::vector<double> phi_o(p);
    for (auto& v : phi_o) v = 4.0 * s.uniform() - 2.0;
    const auto r = verify_proposition1(batch, phi_o);
    worst_rel = std::max(worst_rel, r.residual / std::max(1.0, std::abs(r.synthetic_loglik)));
    min_slack = std::min(min_slack, r.bound_slack);
  }
  std::printf("  info: stress instances, max relative residual %.2e\n", worst_rel);
  return {worst <= 1e-9 && worst_cross <= 1e-9 && min_slack >= 0.0,
          fmt("1000 instances, max residual %.2e (library), %.2e (dense oracle), min bound slack %.3g", worst,
              worst_cross, min_slack)};
}

Outcome gp_matches_dense_oracle() {
  Stream s(2024, "acceptance/gp");
  double worst_mean = 0.0, worst_var = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t d = 1 + inst % 3;
    const std::size_t t = 1 + static_cast<std::size_t>(s.uniform() * 30.0);
    GpHyperparams hp;
    hp.signal_variance = 0.2 + 3.0 * s.uniform();
    for (std::size_t j = 0; j < d; ++j) hp.length_scales.push_back(0.2 + 2.0 * s.uniform());
    // log-uniform over the range the hyperparameter fit can reach relative to sigma_f^2
    hp.noise_variance = hp.signal_variance * std::exp(std::log(1e-6) * s.uniform());
    if (inst % 2) {
      std::vector<double> a, b;
      for (std::size_t j = 0; j < d; ++j) {
        a.push_back(s.uniform());
        b.push_back(s.uniform() - 0.5);
      }
      hp.mean = MeanFunction::quadratic(a, b, s.uniform());
    } else {
      hp.mean = MeanFunction::constant(2.0 * s.uniform() - 1.0);
    }
    Evidence e(d);
    std::vector<double> th(d);
    for (std::size_t i = 0; i < t; ++i) {
      for (auto& x : th) x = -2.0 + 4.0 * s.uniform();
      e.append(th, std::cos(th[0]) + 0.5 * s.uniform());
    }
    const auto gp = GpPosterior::build(e, hp);
    for (auto& x : th) x = -2.5 + 5.0 * s.uniform();
    const auto p = gp.at(th);
    const auto r = oracle::gp_posterior(e, hp, gp.jitter(), th);
    worst_mean = std::max(worst_mean, std::abs(p.mean - r.mean) / std::max(std::abs(r.mean), 1.0));
    // relative to the prior variance, the natural scale of v_t
    worst_var = std::max(worst_var, std::abs(p.var_latent - std::max(r.var, 0.0)) / hp.signal_variance);
  }

  // Noiseless limit (jitter only), reported but not gated: the Gram condition
  // number reaches ~1e11 and the reference solve loses digits as well.
  double worst_noiseless = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t d = 1 + inst % 3;
    const std::size_t t = 2 + static_cast<std::size_t>(s.uniform() * 29.0);
    GpHyperparams hp;
    hp.signal_variance = 0.2 + 3.0 * s.uniform();
    for (std::size_t j = 0; j < d; ++j) hp.length_scales.push_back(0.2 + 2.0 * s.uniform());
    hp.noise_variance = 0.0;
    hp.mean = MeanFunction::constant(0.5);
    Evidence e(d);
    std::vector<double> th(d);
    for (std::size_t i = 0; i < t; ++i) {
      for (auto& x : th) x = -2.0 + 4.0 * s.uniform();
      e.append(th, std::cos(th[0]));
    }
    const auto gp = GpPosterior::build(e, hp);
    for (auto& x : th) x = -2.5 + 5.0 * s.uniform();
    const auto r = oracle::gp_posterior(e, hp, gp.jitter(), th);
    worst_noiseless = std::max(worst_noiseless, std::abs(gp.at(th).mean - r.mean) / std::max(std::abs(r.mean), 1.0));
  }
  std::printf("  info: noiseless evidence (100 instances), max rel err of the mean %.2e\n", worst_noiseless);

  double worst_grad = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t d = 1 + k % 3;
    GpHyperparams hp;
    for (std::size_t j = 0; j < d; ++j) hp.length_scales.push_back(0.5 + s.uniform());
    hp.noise_variance = 0.05;
    hp.mean = MeanFunction::quadratic(std::vector<double>(d, 0.3), std::vector<double>(d, 0.1), 0.0);
    Evidence e(d);
    std::vector<double> th(d);
    for (int i = 0; i < 15; ++i) {
      for (auto& x : th) x = -2.0 + 4.0 * s.uniform();
      e.append(th, std::sin(2.0 * th[0]));
    }
    const auto gp = GpPosterior::build(e, hp);
    for (auto& x : th) x = -1.8 + 3.6 * s.uniform();
    const auto g = gp.at_with_gradient(th);
    for (std::size_t j = 0; j < d; ++j) {
      auto a = th, b = th;
      a[j] += 1e-5;
      b[j] -= 1e-5;
      const auto pa = gp.at(a), pb = gp.at(b);
      const double fm = (pa.mean - pb.mean) / 2e-5, fv = (pa.var_latent - pb.var_latent) / 2e-5;
      worst_grad = std::max(worst_grad, std::abs(g.d_mean[j] - fm) / std::max(std::abs(fm), 1.0));
      worst_grad = std::max(worst_grad, std::abs(g.d_var[j] - fv) / std::max(std::abs(fv), 1.0));
    }
  }
  return {worst_mean <= 1e-8 && worst_var <= 1e-8 && worst_grad <= 1e-4,
          fmt("200 instances: max rel err mean %.2e, var %.2e; 100 gradient points: max rel err %.2e", worst_mean,
              worst_var, worst_grad)};
}

Outcome gaussian_estimator_law() {
  const std::size_t n = 10, big_n = 2, reps = 2000;
  const double theta_o = 1.0;
  const double nominal = 1.0 / static_cast<double>(n * big_n);

  // Maximizer of the synthetic log-likelihood with the true variance 1/n of
  // Phi and simulator noise held fixed across theta, found numerically.
  auto maximize = [&](double phi_o, Stream& rng) {
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> noise(big_n, std::vector<double>(n));
    for (auto& w : noise)
      for (auto& v : w) v = nd(rng);
    auto neg = [&](double th) {
      SyntheticFit fit;
      fit.replicates = big_n;
      fit.mean = Eigen::VectorXd::Zero(1);
      for (const auto& w : noise) fit.mean[0] += summarize_gaussian(gaussian_from_noise(th, w)).phi[0];
      fit.mean[0] /= static_cast<double>(big_n);
      fit.cov = Eigen::MatrixXd::Constant(1, 1, 1.0 / static_cast<double>(n));
      return -synthetic_loglik(fit, std::vector<double>{phi_o});
    };
    return boost::math::tools::brent_find_minima(neg, phi_o - 5.0, phi_o + 5.0, 50).first;
  };

  // Fixed observation: spread of the maximizer.
  Stream obs(7, "acceptance/estimator/observed");
  const double phi_fixed = summarize_gaussian(simulate_gaussian(theta_o, n, obs)).phi[0];
  std::vector<double> est(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    Stream rng(r, "acceptance/estimator/fixed");
    est[r] = maximize(phi_fixed, rng);
  }
  double m = 0.0;
  for (double x : est) m += x;
  m /= reps;
  double v = 0.0;
  for (double x : est) v += (x - m) * (x - m);
  v /= reps - 1;

  // Fresh observation per replicate: mean squared error against theta_o.
  double mse = 0.0, mse_limit = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    Stream o(r, "acceptance/estimator/observed-rep");
    const double phi_o = summarize_gaussian(simulate_gaussian(theta_o, n, o)).phi[0];
    Stream rng(r, "acceptance/estimator/sim-rep");
    const double th = maximize(phi_o, rng);
    mse += (th - theta_o) * (th - theta_o);
    mse_limit += (phi_o - theta_o) * (phi_o - theta_o);
  }
  mse /= reps;
  mse_limit /= reps;
  const double ratio = mse / (1.0 / static_cast<double>(n));
  const double paired = mse / mse_limit;
  const bool ok = std::abs(v / nominal - 1.0) <= 0.15 && std::abs(ratio / 1.5 - 1.0) <= 0.10;
  return {ok, fmt("var %.5f vs %.3f (%.1f%%); MSE ratio %.4f vs 1.5 (paired with the N->inf estimator: %.4f)", v,
                  nominal, 100.0 * (v / nominal - 1.0), ratio, paired)};
}

Outcome closed_form_acceptance_probability() {
  const std::size_t n = 10, sims = 10000;
  const double phi_o = 0.37, h = 0.1;
  auto model = make_gaussian_discrepancy(phi_o, n);
  const double half = 3.0 / std::sqrt(static_cast<double>(n));
  int ok = 0;
  double worst_z = 0.0;
  for (int k = 0; k < 41; ++k) {
    const double th = phi_o - half + 2.0 * half * k / 40.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < sims; ++i) {
      Stream rng = Stream(11, "acceptance/lu-grid", static_cast<std::uint64_t>(k)).child("sim", i);
      hits += model->evaluate(std::vector<double>{th}, rng) < h;
    }
    const double p = oracle_lu_gaussian(th, phi_o, n, h);
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(sims));
    const double diff = std::abs(static_cast<double>(hits) / static_cast<double>(sims) - p);
    const bool in = diff <= 3.0 * se;
    ok += in;
    worst_z = std::max(worst_z, se > 0 ? diff / se : (diff > 0 ? INFINITY : 0.0));
  }
  return {ok >= 39, fmt("%d/41 grid points within 3 binomial SE (need >= 39), worst |z| %.2f", ok, worst_z)};
}

Outcome model_based_vs_sample_average() {
  const auto root = scratch("example11");
  const auto bo = run_experiment(load_config(kConfigs / "gaussian_bolfi_lu.json"), under(root));
  const auto grid = run_experiment(load_config(kConfigs / "gaussian_grid.json"), under(root));
  auto argmax = [](const fs::path& file, const std::string& kind) {
    const Csv c(file);
    const std::size_t kc = c.col("kind"), tc = c.col("theta"), vc = c.col("value");
    double best = -INFINITY, arg = NAN;
    for (const auto& r : c.rows) {
      if (r[kc] != kind) continue;
      const double v = std::stod(r[vc]);
      if (v > best) best = v, arg = std::stod(r[tc]);
    }
    return arg;
  };
  const double a = argmax(bo.dir / "likelihood_curve.csv", "model-lu");
  const double b = argmax(grid.dir / "likelihood_curve.csv", "sample-average-lu");
  const bool budgets = stage_sims(bo, "bolfi") == 50 && bo.simulations == 50 && grid.simulations == 15000;
  return {budgets && std::abs(a - b) <= 0.2,
          fmt("argmax model-based %.4f, sample-average %.4f, |diff| %.4f; budgets %llu vs %llu simulations", a, b,
              std::abs(a - b), static_cast<unsigned long long>(bo.simulations),
              static_cast<unsigned long long>(grid.simulations))};
}

Outcome ricker_end_to_end() {
  const auto root = scratch("ricker");
  int good = 0, ledger_ok = 0, jhat_good = 0;
  std::string means;
  for (int s = 1; s <= 10; ++s) {
    const auto cfg = with_seeds(kConfigs / "ricker_bolfi.json", s, 100 + s, [&](json& d) {
      d["output_dir"] = "seed" + std::to_string(s);
    });
    const auto r = run_experiment(cfg, under(root));
    const auto m = r.posterior->mean();
    const bool ok = std::abs(m[0] - 3.8) <= 0.3 && std::abs(m[1] - 0.3) <= 0.25 && std::abs(m[2] - 10.0) <= 2.5;
    good += ok;
    ledger_ok += stage_sims(r, "bolfi") == 150 && stage_sims(r, "posterior") == 0 && r.simulations == 150;
    const double jr = r.manifest["details"]["argmin_jhat"][0].get<double>();
    jhat_good += std::abs(jr - 3.8) <= 0.3;
    means += fmt(" (%.2f,%.2f,%.1f)%s", m[0], m[1], m[2], ok ? "" : "x");
  }
  std::printf("  info: J-hat minimizer log r within 0.3 of 3.8 in %d/10 seeds\n", jhat_good);
  return {good >= 7 && ledger_ok == 10,
          fmt("%d/10 seeds within tolerance (need >= 7); ledger 150/0 in %d/10 runs; means%s", good, ledger_ok,
              means.c_str())};
}

Outcome acquisition_rule_dispersion() {
  const auto root = scratch("rules");
  // One observed data set, as in a single inference problem; only the run seed varies.
  const std::uint64_t kObsSeed = 7;
  int wins = 0;
  std::string detail;
  for (int s = 1; s <= 10; ++s) {
    const auto sto = run_experiment(with_seeds(kConfigs / "ricker1d_stochastic.json", s, kObsSeed, [&](json& d) {
                                      d["output_dir"] = "sto" + std::to_string(s);
                                    }),
                                    under(root));
    const auto det = run_experiment(with_seeds(kConfigs / "ricker1d_deterministic.json", s, kObsSeed, [&](json& d) {
                                      d["output_dir"] = "det" + std::to_string(s);
                                    }),
                                    under(root));
    const std::size_t acq_s = Csv(sto.dir / "acquisitions.csv").rows.size();
    const std::size_t acq_d = Csv(det.dir / "acquisitions.csv").rows.size();
    if (acq_s != 150 || acq_d != 150) return {false, fmt("seed %d: %zu / %zu acquisitions, expected 150", s, acq_s, acq_d)};
    const bool w = *sto.nn_distance > *det.nn_distance;
    wins += w;
    std::printf("  info: seed %2d  nn %.5f vs %.5f  distinct %zu vs %zu\n", s, *sto.nn_distance, *det.nn_distance,
                *sto.distinct_acquisitions, *det.distinct_acquisitions);
  }
  return {wins >= 8, fmt("stochastic rule more dispersed in %d/10 seeds (need >= 8)", wins)};
}

Outcome prior_modulation() {
  const auto root = scratch("prior");
  const json base = json::parse(read_file(kConfigs / "gaussian_prior_modulation.json"));
  const double m0 = base["prior"]["mean"][0].get<double>(), s0 = base["prior"]["sd"][0].get<double>();
  const double n = base["model"]["n"].get<double>();
  int wins = 0;
  std::string detail;
  for (int s = 1; s <= 10; ++s) {
    double dist[2];
    double mode = 0.0;
    for (int mod = 0; mod < 2; ++mod) {
      const auto r = run_experiment(with_seeds(kConfigs / "gaussian_prior_modulation.json", s, 100 + s, [&](json& d) {
                                      d["bolfi"]["prior_modulation"] = mod == 1;
                                      d["output_dir"] = fmt("m%d_s%d", mod, s);
                                    }),
                                    under(root));
      const double phi_o = Csv(r.dir / "observed.csv").numbers("value")[0];
      mode = (n * phi_o + m0 / (s0 * s0)) / (n + 1.0 / (s0 * s0));
      const auto acq = Csv(r.dir / "acquisitions.csv").numbers("proposed_theta");
      double mean_acq = 0.0;
      for (double x : acq) mean_acq += x;
      mean_acq /= static_cast<double>(acq.size());
      dist[mod] = std::abs(mean_acq - mode);
    }
    wins += dist[1] < dist[0];
    detail += fmt(" %.2f/%.2f", dist[1], dist[0]);
  }
  return {wins >= 9, fmt("modulated mean acquisition closer to the posterior mode in %d/10 seeds (need >= 9);"
                         " distances with/without:%s", wins, detail.c_str())};
}

Outcome bounds_suite() {
  Stream s(2024, "acceptance/bounds");
  int jensen_fail = 0, markov_fail = 0;
  for (int inst = 0; inst < 10000; ++inst) {
    const std::size_t p = 1 + inst % 3;
    const std::size_t n = 2 + static_cast<std::size_t>(s.uniform() * 30);
    const auto batch = random_batch(s, n, p);
    std::vector<double> phi(p);
    for (auto& v : phi) v = 4.0 * s.uniform() - 2.0;
    Eigen::MatrixXd a(p, p);
    for (auto& v : a.reshaped()) v = 2.0 * s.uniform() - 1.0;
    const Eigen::MatrixXd c = a * a.transpose() + (0.05 + s.uniform()) * Eigen::MatrixXd::Identity(p, p);
    std::vector<double> d;
    for (const auto& st : batch) d.push_back(gaussian_kernel_discrepancy(phi, st.phi, c));
    const auto kg = KernelSpec::gaussian(p);
    const double lk = kernel_lik_sample(d, kg);
    const double jensen = kernel_value(kg, jg_sample(batch, phi, BandwidthRule::fixed_matrix(c)));
    jensen_fail += !(lk >= jensen * (1.0 - 1e-12));
  }
  for (int inst = 0; inst < 10000; ++inst) {
    const std::size_t n = 1 + static_cast<std::size_t>(s.uniform() * 40);
    std::vector<double> d(n);
    const double scale = std::exp(4.0 * s.uniform() - 2.0);
    for (auto& v : d) v = scale * -std::log(1.0 - s.uniform());  // nonnegative discrepancies
    const double h = std::exp(4.0 * s.uniform() - 2.0);
    const double c = 0.1 + 10.0 * s.uniform();
    double mean_d = 0.0;
    for (double v : d) mean_d += v;
    mean_d /= static_cast<double>(n);
    markov_fail += !(kernel_lik_sample(d, KernelSpec::uniform(h, c)) / c >= 1.0 - mean_d / h);
  }

  double worst_c = 0.0;
  const Box box({-2.0, 0.0}, {2.0, 1.0});
  const UniformBox prior(box);
  const DiagonalGaussian q({0.0, 0.5}, {1.0, 0.3});
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t m = 20, big_n = 1 + inst % 5;
    std::vector<double> thetas;
    std::vector<std::vector<double>> deltas(m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto th = q.sample(s);
      thetas.insert(thetas.end(), th.begin(), th.end());
      for (std::size_t k = 0; k < big_n; ++k) deltas[i].push_back(s.uniform());
    }
    thetas[0] = 0.0, thetas[1] = 0.5;  // at least one acceptance inside the prior support
    deltas[0][0] = 0.0;
    const double h = 0.05 + 0.9 * s.uniform();
    const auto w1 = uniform_kernel_weights(2, thetas, deltas, h, prior, q, 1.0);
    const auto wc = uniform_kernel_weights(2, thetas, deltas, h, prior, q, std::exp(20.0 * s.uniform() - 10.0));
    for (std::size_t i = 0; i < m; ++i) worst_c = std::max(worst_c, std::abs(w1.weights[i] - wc.weights[i]));
  }
  return {jensen_fail == 0 && markov_fail == 0 && worst_c <= 1e-12,
          fmt("Jensen violations %d/10000, Markov violations %d/10000, max weight change under c %.1e", jensen_fail,
              markov_fail, worst_c)};
}

Outcome determinism() {
  int runs = 0, mismatches = 0;
  std::string bad;
  for (const auto& e : fs::directory_iterator(kConfigs)) {
    if (e.path().extension() != ".json" || is_comparison_file(e.path())) continue;
    const auto cfg = load_config(e.path());
    const auto a = run_experiment(cfg, under(scratch("det_a")));
    const auto b = run_experiment(cfg, under(scratch("det_b")));
    ++runs;
    for (const auto& f : fs::recursive_directory_iterator(a.dir)) {
      if (!f.is_regular_file()) continue;
      const auto rel = fs::relative(f.path(), a.dir);
      if (rel == "budget.json") continue;  // wall-clock times only
      const auto ext = rel.extension();
      if (ext != ".csv" && ext != ".json") continue;
      if (!fs::exists(b.dir / rel) || read_file(f.path()) != read_file(b.dir / rel)) {
        ++mismatches;
        bad += " " + e.path().filename().string() + ":" + rel.string();
      }
    }
  }
  return {runs > 0 && mismatches == 0,
          fmt("%d configs rerun, %d differing manifest/CSV files%s", runs, mismatches, bad.c_str())};
}

}  // namespace

// Optional arguments select criteria by number; no arguments runs all.
int main(int argc, char** argv) {
  simd::select_default();
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  struct Criterion {
    const char* name;
    Outcome (*fn)();
    double limit_s;  // wall-clock budget for the whole criterion
  };
  const Criterion criteria[] = {
      {"synthetic-likelihood / Gaussian-kernel identity and bound", identity_between_synthetic_and_kernel_likelihoods,
       10},
      {"GP posterior and gradients vs dense oracle", gp_matches_dense_oracle, 30},
      {"Gaussian synthetic-likelihood estimator law", gaussian_estimator_law, 60},
      {"closed-form uniform-kernel likelihood vs simulation", closed_form_acceptance_probability, 60},
      {"model-based vs sample-average likelihood (50 vs 15000 simulations)", model_based_vs_sample_average, 120},
      {"Ricker end-to-end posterior means", ricker_end_to_end, 900},
      {"stochastic vs deterministic acquisition dispersion (1-D Ricker)", acquisition_rule_dispersion, 600},
      {"prior modulation moves acquisitions to the posterior mode", prior_modulation, 120},
      {"Jensen and Markov bounds, kernel scale invariance", bounds_suite, 10},
      {"byte-identical reruns", determinism, INFINITY},
  };
  int failed = 0, idx = 0, ran = 0;
  for (const auto& c : criteria) {
    ++idx;
    if (!only.empty() && std::find(only.begin(), only.end(), idx) == only.end()) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs < c.limit_s;
    failed += !pass;
    std::printf("%s [%2d] %s: %s (%.1fs, limit %.0fs)\n", pass ? "PASS" : "FAIL", idx, c.name, o.detail.c_str(), secs,
                c.limit_s);
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed ? 1 : 0;
}

#include "bolfi/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "bolfi/bo.hpp"
#include "bolfi/distributions.hpp"
#include "bolfi/errors.hpp"
#include "bolfi/io.hpp"
#include "bolfi/likelihoods.hpp"
#include "bolfi/numeric.hpp"
#include "bolfi/parallel.hpp"
#include "bolfi/simd.hpp"

#ifndef BOLFI_VERSION
#define BOLFI_VERSION "0.0.0"
#endif

namespace bolfi::harness {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return out;
}

// Everything a method needs, assembled from the config before any stage runs.
struct Problem {
  ParameterMap map;
  Box bounds;
  std::vector<std::string> names;
  SummaryStats observed;
  std::vector<std::string> stat_names;
  std::unique_ptr<DiscrepancyModel> model;
  const SyntheticLikelihoodModel* synthetic = nullptr;
  std::shared_ptr<const Distribution> prior;
};

Problem build_problem(const ExperimentConfig& cfg) {
  Problem p;
  p.map = cfg.parameter_map();
  p.bounds = cfg.bounds();
  p.names = cfg.free_names();
  const auto& m = cfg.model;

  StatsSimulator full = m.id == ModelId::Gaussian ? gaussian_stats_simulator(m.n)
                                                  : ricker_stats_simulator(m.n, m.burn_in);
  if (m.id == ModelId::Gaussian) {
    p.stat_names = {"mean"};
  } else {
    const auto& n = ricker_stat_names();
    p.stat_names.assign(n.begin(), n.end());
  }

  switch (m.observed.kind) {
    case ObservedSpec::Kind::Generated: {
      Stream rng(m.observed.seed, "observed");
      p.observed = full(m.observed.theta_true, rng);
      break;
    }
    case ObservedSpec::Kind::Data: {
      DataSet data{m.observed.values};
      p.observed = m.id == ModelId::Gaussian ? summarize_gaussian(data) : summarize_ricker(data);
      break;
    }
    case ObservedSpec::Kind::Summary:
      p.observed.phi = m.observed.values;
      break;
  }

  StatsSimulator restricted = restrict_simulator(full, p.map);
  const std::size_t d = p.map.free_dims();
  switch (cfg.discrepancy.kind) {
    case DiscrepancyKind::SquaredL2:
      p.model = std::make_unique<StatsDiscrepancyModel>(restricted, p.observed, d, DiscrepancyMode::squared_l2());
      break;
    case DiscrepancyKind::L1Normalized:
      p.model = std::make_unique<StatsDiscrepancyModel>(restricted, p.observed, d, DiscrepancyMode::l1_normalized());
      break;
    case DiscrepancyKind::GaussianKernel: {
      const Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(
          cfg.discrepancy.bandwidth.data(), static_cast<Eigen::Index>(cfg.discrepancy.bandwidth.size()));
      p.model = std::make_unique<StatsDiscrepancyModel>(restricted, p.observed, d,
                                                        DiscrepancyMode::gaussian_kernel(diag.asDiagonal()));
      break;
    }
    case DiscrepancyKind::SyntheticLoglik: {
      auto s = std::make_unique<SyntheticLikelihoodModel>(restricted, p.observed, d, cfg.discrepancy.replicates);
      p.synthetic = s.get();
      p.model = std::move(s);
      break;
    }
  }

  if (cfg.prior.kind == PriorSpec::Kind::Uniform) {
    p.prior = std::make_shared<UniformBox>(p.bounds);
  } else {
    p.prior = std::make_shared<DiagonalGaussian>(cfg.prior.mean, cfg.prior.sd, p.bounds);
  }
  return p;
}

// Wraps each stage: attributes simulator calls and wall time to it, and
// converts failures into StageError carrying the stage name.
class Ledger {
public:
  explicit Ledger(const DiscrepancyModel& model) : model_(model) {}

  template <class F>
  auto stage(const std::string& name, F&& fn) {
    const std::uint64_t c0 = model_.calls();
    const std::uint64_t d0 = model_.datasets();
    const auto t0 = std::chrono::steady_clock::now();
    auto close = [&] {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      stages_.push_back({name, model_.calls() - c0, model_.datasets() - d0, secs});
    };
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        close();
      } else {
        auto r = fn();
        close();
        return r;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  }

  const std::vector<StageBudget>& stages() const { return stages_; }
  std::uint64_t simulations() const {
    std::uint64_t s = 0;
    for (const auto& st : stages_) s += st.simulations;
    return s;
  }
  std::uint64_t datasets() const {
    std::uint64_t s = 0;
    for (const auto& st : stages_) s += st.datasets;
    return s;
  }

private:
  const DiscrepancyModel& model_;
  std::vector<StageBudget> stages_;
};

// Output files are buffered and written by a single thread.
class OutputSet {
public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    write_file_atomic(dir_ / name, content);
    index_[name] = content;
  }
  void write(const std::string& name, const CsvTable& t) { write(name, t.str()); }
  void write(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  json index() const {
    json arr = json::array();
    for (const auto& [name, content] : index_) {
      arr.push_back({{"file", name}, {"bytes", content.size()}, {"fnv1a64", file_digest(content)}});
    }
    return arr;
  }
  const fs::path& dir() const { return dir_; }

private:
  fs::path dir_;
  std::map<std::string, std::string> index_;
};

json posterior_summary(const WeightedParticles& wp, const std::vector<std::string>& names) {
  json j;
  j["particles"] = wp.size();
  j["ess"] = wp.ess();
  j["names"] = names;
  j["mean"] = wp.mean();
  j["sd"] = wp.sd();
  std::vector<double> lo, hi;
  for (std::size_t k = 0; k < wp.dims; ++k) {
    lo.push_back(wp.quantile(k, 0.025));
    hi.push_back(wp.quantile(k, 0.975));
  }
  j["ci_low"] = lo;
  j["ci_high"] = hi;
  return j;
}

CsvTable observed_csv(const Problem& p) {
  CsvTable t({"statistic", "value"});
  for (std::size_t i = 0; i < p.observed.phi.size(); ++i) {
    t.row({i < p.stat_names.size() ? p.stat_names[i] : "stat_" + std::to_string(i),
           format_double(p.observed.phi[i])});
  }
  return t;
}

CsvTable curve_header() { return CsvTable({"theta", "kind", "value", "simulations"}); }

json stream_keys(std::uint64_t seed, std::initializer_list<const char*> names) {
  json j;
  for (const char* n : names) j[n] = hex64(Stream(seed, n).key());
  return j;
}

std::vector<ParamVector> evidence_points(const Evidence& e) {
  std::vector<ParamVector> out;
  for (std::size_t i = 0; i < e.size(); ++i) {
    auto th = e.theta(i);
    out.emplace_back(th.begin(), th.end());
  }
  return out;
}

struct MethodOutcome {
  std::optional<WeightedParticles> posterior;
  json details = json::object();
  json seeds = json::object();
  std::optional<double> nn_distance;
  std::optional<std::size_t> distinct;
};

MethodOutcome run_bolfi_method(const ExperimentConfig& cfg, const RunOptions& opt, Problem& p, Ledger& ledger,
                               OutputSet& out) {
  MethodOutcome mo;
  const BolfiSpec& b = cfg.bolfi;
  BoConfig bc;
  bc.bounds = p.bounds;
  bc.acquisition.epsilon_eta = b.epsilon_eta;
  bc.acquisition.rule = b.rule;
  bc.acquisition.rel_tolerance = b.rel_tolerance;
  bc.acquisition.batch_size = b.batch_size;
  bc.acquisition.t0 = b.t0;
  bc.acquisition.T = b.T;
  if (b.prior_modulation) bc.acquisition.prior_modulation = p.prior;
  bc.response = b.response;
  bc.mean_kind = b.mean;
  bc.refit_every = b.refit_every;
  bc.workers = opt.workers;

  mo.seeds["bolfi"] = stream_keys(cfg.seed, {"bolfi/simulate", "bolfi/propose", "bolfi/redraw"});
  BoState state = ledger.stage("bolfi", [&] { return run_bolfi(*p.model, bc, cfg.seed); });
  if (state.simulations != ledger.stages().back().simulations) {
    throw StageError("bolfi", "loop reported " + std::to_string(state.simulations) +
                                  " simulations but the counter saw " +
                                  std::to_string(ledger.stages().back().simulations));
  }

  out.write("evidence.csv", evidence_csv(state, p.names));
  out.write("acquisitions.csv", acquisitions_csv(state, p.names));
  out.write("bo_state.json", bo_state_json(state, cfg.echo));

  const std::size_t d = p.bounds.dims();
  // Dispersion of the rule's own acquisitions; the Sobol design is shared by
  // every rule under the same seed and is left out.
  if (state.log.size() >= 2) {
    std::vector<double> acquired;
    std::set<std::vector<double>> uniq;
    for (const auto& rec : state.log) {
      acquired.insert(acquired.end(), rec.proposed.begin(), rec.proposed.end());
      uniq.insert(rec.proposed);
    }
    mo.nn_distance = mean_nearest_neighbor_distance(acquired, d);
    mo.distinct = uniq.size();
  }

  const GpPosterior& gp = state.gp;
  const BoxMinimum best = argmin_jhat(gp, p.bounds, b.response);
  mo.details["argmin_jhat"] = best.x;
  mo.details["jhat_min"] = estimate_j(gp, best.x, b.response);
  mo.details["failures"] = state.failures.size();

  // Threshold for the model-based likelihood: explicit, or the modelled
  // quantile at the J-hat minimizer.
  std::optional<double> h;
  const auto& ps = b.posterior;
  if (ps.h > 0.0) {
    h = ps.h;
  } else {
    try {
      h = threshold_at(gp.at(best.x), b.response, ps.threshold_quantile);
    } catch (const std::domain_error&) {
      if (ps.likelihood == BolfiPosteriorSpec::Likelihood::ModelLu) {
        throw StageError("posterior", "modelled threshold is not positive; set bolfi.posterior.h");
      }
    }
  }
  if (h) mo.details["threshold"] = *h;

  if (d == 1 && b.curve_points > 0) {
    CsvTable curve = curve_header();
    const std::string sims = std::to_string(state.simulations);
    for (double th : linspace(p.bounds.lower[0], p.bounds.upper[0], b.curve_points)) {
      const double x[1] = {th};
      curve.row({format_double(th), "jhat", format_double(estimate_j(gp, x, b.response)), sims});
    }
    if (h) {
      for (double th : linspace(p.bounds.lower[0], p.bounds.upper[0], b.curve_points)) {
        const double x[1] = {th};
        curve.row({format_double(th), "model-lu", format_double(model_based_lu(gp, x, *h, b.response)), sims});
      }
    }
    if (p.synthetic) {
      for (double th : linspace(p.bounds.lower[0], p.bounds.upper[0], b.curve_points)) {
        const double x[1] = {th};
        curve.row({format_double(th), "synthetic-loglik", format_double(-estimate_j(gp, x, b.response)), sims});
      }
    }
    out.write("likelihood_curve.csv", curve);
  }

  if (ps.likelihood != BolfiPosteriorSpec::Likelihood::None) {
    LogLikelihood loglik;
    if (ps.likelihood == BolfiPosteriorSpec::Likelihood::ModelLu) {
      const double hh = *h;
      loglik = [&gp, hh, resp = b.response](std::span<const double> th) {
        return log_model_based_lu(gp, th, hh, resp);
      };
    } else {
      loglik = [&gp, resp = b.response](std::span<const double> th) { return -estimate_j(gp, th, resp); };
    }
    mo.seeds["posterior"] = stream_keys(cfg.seed, {"posterior"});
    WeightedParticles wp = ledger.stage("posterior", [&] {
      Stream rng(cfg.seed, "posterior");
      return iterative_model_based_is(loglik, evidence_points(state.evidence), *p.prior, p.bounds,
                                      ps.iterations, ps.samples, rng, opt.workers);
    });
    if (ledger.stages().back().simulations != 0) {
      throw StageError("posterior", "model-based sampling must not call the simulator");
    }
    CsvTable t = particles_csv_header(p.names);
    append_particles(t, wp, ps.iterations);
    out.write("posterior.csv", t);
    mo.posterior = std::move(wp);
  }
  return mo;
}

MethodOutcome run_mcmc_method(const ExperimentConfig& cfg, Problem& p, Ledger& ledger, OutputSet& out) {
  MethodOutcome mo;
  McmcConfig mc;
  mc.iterations = cfg.mcmc.iterations;
  mc.proposal_sd = cfg.mcmc.proposal_sd;
  mc.log_scale = cfg.mcmc.log_scale;
  mc.burn_in_fraction = cfg.mcmc.burn_in_fraction;
  mc.start = cfg.mcmc.start;
  mo.seeds["synthetic-mcmc"] = stream_keys(cfg.seed, {"mcmc"});
  McmcChain chain = ledger.stage("synthetic-mcmc", [&] {
    Stream rng(cfg.seed, "mcmc");
    return rw_metropolis_synthetic(*p.synthetic, *p.prior, mc, rng);
  });
  out.write("chain.csv", chain_csv(chain, p.names));
  mo.details["acceptance_rate"] = chain.acceptance_rate();
  mo.details["rejected_singular"] = chain.rejected_singular;
  mo.details["rejected_prior"] = chain.rejected_prior;
  mo.details["burn_in"] = chain.burn_in;
  WeightedParticles wp = chain.posterior();
  CsvTable t = particles_csv_header(p.names);
  append_particles(t, wp, 1);
  out.write("posterior.csv", t);
  mo.posterior = std::move(wp);
  return mo;
}

MethodOutcome run_abc_method(const ExperimentConfig& cfg, const RunOptions& opt, Problem& p, Ledger& ledger,
                             OutputSet& out) {
  MethodOutcome mo;
  const AbcStop stop = cfg.abc.proposals ? AbcStop::proposals(cfg.abc.proposals)
                                         : AbcStop::accepted(cfg.abc.accepted, cfg.abc.cap);
  mo.seeds["abc-rejection"] = stream_keys(cfg.seed, {"abc"});
  AbcResult r = ledger.stage("abc-rejection", [&] {
    Stream rng(cfg.seed, "abc");
    return abc_rejection(*p.model, *p.prior, cfg.abc.h, stop, rng, opt.workers);
  });
  mo.details["threshold"] = cfg.abc.h;
  mo.details["proposals"] = r.proposals;
  mo.details["accepted"] = r.accepted;
  mo.details["acceptance_rate"] = r.acceptance_rate();
  CsvTable t = particles_csv_header(p.names);
  append_particles(t, r.particles, 1);
  out.write("posterior.csv", t);
  mo.posterior = std::move(r.particles);
  return mo;
}

MethodOutcome run_pmc_method(const ExperimentConfig& cfg, const RunOptions& opt, Problem& p, Ledger& ledger,
                             OutputSet& out) {
  MethodOutcome mo;
  PmcConfig pc;
  pc.generations = cfg.pmc.generations;
  pc.target_accepted = cfg.pmc.target_accepted;
  pc.simulation_cap = cfg.pmc.simulation_cap;
  pc.thresholds = cfg.pmc.thresholds;
  pc.quantile = cfg.pmc.quantile;
  pc.initial_simulations = cfg.pmc.initial_simulations;
  pc.workers = opt.workers;
  mo.seeds["pmc-abc"] = stream_keys(cfg.seed, {"pmc"});
  PmcResult r = ledger.stage("pmc-abc", [&] {
    Stream rng(cfg.seed, "pmc");
    return pmc_abc(*p.model, *p.prior, p.bounds, pc, rng);
  });
  if (r.total_simulations() != ledger.stages().back().simulations) {
    throw StageError("pmc-abc", "generation budgets do not add up to the simulator counter");
  }
  CsvTable gens({"generation", "threshold", "simulations", "proposals", "accepted", "ess"});
  CsvTable t = particles_csv_header(p.names);
  json jg = json::array();
  for (std::size_t g = 0; g < r.generations.size(); ++g) {
    const auto& gen = r.generations[g];
    gens.row({std::to_string(g + 1), format_double(gen.threshold), std::to_string(gen.simulations),
              std::to_string(gen.proposals), std::to_string(gen.accepted), format_double(gen.particles.ess())});
    append_particles(t, gen.particles, g + 1);
    jg.push_back({{"generation", g + 1}, {"threshold", gen.threshold}, {"simulations", gen.simulations}});
  }
  mo.details["initial_simulations"] = r.initial_simulations;
  mo.details["generations"] = jg;
  out.write("pmc_generations.csv", gens);
  out.write("posterior.csv", t);
  mo.posterior = r.generations.back().particles;
  return mo;
}

MethodOutcome run_grid_method(const ExperimentConfig& cfg, const RunOptions& opt, Problem& p, Ledger& ledger,
                              OutputSet& out) {
  MethodOutcome mo;
  const GridSpec& g = cfg.grid;
  const std::vector<double> grid = linspace(p.bounds.lower[0], p.bounds.upper[0], g.points);
  const bool uniform = g.kernel == GridSpec::Kernel::Uniform;
  const std::size_t reps = uniform ? g.replicates : 1;
  mo.seeds["grid-likelihood"] = stream_keys(cfg.seed, {"grid"});

  std::vector<std::vector<double>> deltas(g.points, std::vector<double>(reps));
  ledger.stage("grid-likelihood", [&] {
    const Stream base(cfg.seed, "grid");
    parallel_for(g.points, opt.workers, [&](std::size_t k) {
      const double x[1] = {grid[k]};
      Stream pk = base.child("point", k);
      for (std::size_t j = 0; j < reps; ++j) {
        Stream rj = pk.child("replicate", j);
        deltas[k][j] = p.model->evaluate(x, rj);
      }
    });
  });

  CsvTable curve = curve_header();
  std::vector<double> log_w(g.points);
  std::vector<double> thetas(grid);
  const std::string per_point = std::to_string(reps);
  for (std::size_t k = 0; k < g.points; ++k) {
    const double x[1] = {grid[k]};
    double value, log_lik;
    if (uniform) {
      value = kernel_lik_sample(deltas[k], KernelSpec::uniform(g.h, 1.0));
      log_lik = value > 0.0 ? std::log(value) : -std::numeric_limits<double>::infinity();
    } else {
      value = -deltas[k][0];
      log_lik = value;
    }
    curve.row({format_double(grid[k]), uniform ? "sample-average-lu" : "synthetic-loglik", format_double(value),
               per_point});
    log_w[k] = log_lik + p.prior->log_pdf(x);
  }
  out.write("likelihood_curve.csv", curve);

  if (uniform) {
    CsvTable raw({"theta", "replicate", "delta"});
    for (std::size_t k = 0; k < g.points; ++k) {
      for (std::size_t j = 0; j < reps; ++j) {
        raw.row({format_double(grid[k]), std::to_string(j), format_double(deltas[k][j])});
      }
    }
    out.write("grid_discrepancies.csv", raw);
    mo.details["threshold"] = g.h;
  }
  mo.details["points"] = g.points;
  mo.details["replicates_per_point"] = reps;

  // Grid points weighted by likelihood times prior.
  WeightedParticles wp = ledger.stage("grid-posterior", [&] {
    return particles_from_log_weights(1, thetas, log_w);
  });
  CsvTable t = particles_csv_header(p.names);
  append_particles(t, wp, 1);
  out.write("posterior.csv", t);
  mo.posterior = std::move(wp);
  return mo;
}

}  // namespace

std::string file_digest(const std::string& content) { return hex64(hash_name(content)); }

fs::path resolve_output_dir(const std::string& dir, const RunOptions& options) {
  fs::path p = dir;
  if (p.is_absolute() || !options.output_root) return p;
  return *options.output_root / p;
}

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  Problem p = [&] {
    try {
      return build_problem(cfg);
    } catch (const std::exception& e) {
      throw StageError("setup", e.what());
    }
  }();

  RunResult res;
  res.name = cfg.name;
  res.method = cfg.method;
  res.dir = resolve_output_dir(cfg.output_dir, options);
  res.names = p.names;
  res.truth = cfg.truth();

  OutputSet out(res.dir);
  Ledger ledger(*p.model);
  try {
    fs::create_directories(res.dir);
    out.write("observed.csv", observed_csv(p));
  } catch (const std::exception& e) {
    throw StageError("output", e.what());
  }

  MethodOutcome mo;
  switch (cfg.method) {
    case Method::Bolfi: mo = run_bolfi_method(cfg, options, p, ledger, out); break;
    case Method::SyntheticMcmc: mo = run_mcmc_method(cfg, p, ledger, out); break;
    case Method::AbcRejection: mo = run_abc_method(cfg, options, p, ledger, out); break;
    case Method::PmcAbc: mo = run_pmc_method(cfg, options, p, ledger, out); break;
    case Method::GridLikelihood: mo = run_grid_method(cfg, options, p, ledger, out); break;
  }

  res.stages = ledger.stages();
  res.simulations = ledger.simulations();
  res.datasets = ledger.datasets();
  res.posterior = mo.posterior;
  res.nn_distance = mo.nn_distance;
  res.distinct_acquisitions = mo.distinct;

  if (res.simulations != p.model->calls() || res.datasets != p.model->datasets()) {
    throw StageError("ledger", "stage budgets (" + std::to_string(res.simulations) +
                                   ") disagree with the simulator counter (" +
                                   std::to_string(p.model->calls()) + ")");
  }

  try {
    json budget;
    budget["name"] = cfg.name;
    budget["method"] = to_string(cfg.method);
    json st = json::array();
    double total = 0.0;
    for (const auto& s : res.stages) {
      st.push_back({{"stage", s.stage},
                    {"simulations", s.simulations},
                    {"datasets", s.datasets},
                    {"wall_seconds", s.wall_seconds}});
      total += s.wall_seconds;
    }
    budget["stages"] = st;
    budget["total_wall_seconds"] = total;
    budget["workers"] = options.workers;
    budget["simd_backend"] = std::string(simd::backend_name());
    write_file_atomic(res.dir / "budget.json", budget.dump(2) + "\n");

    json m;
    m["name"] = cfg.name;
    m["method"] = to_string(cfg.method);
    m["model"] = to_string(cfg.model.id);
    m["code_version"] = BOLFI_VERSION;
    if (cfg.model.id == ModelId::Ricker) m["stat_set"] = kRickerStatSetVersion;
    m["config"] = cfg.echo;
    json seeds;
    seeds["master"] = cfg.seed;
    if (cfg.model.observed.kind == ObservedSpec::Kind::Generated) {
      seeds["observed"] = stream_keys(cfg.model.observed.seed, {"observed"});
    }
    seeds["stages"] = mo.seeds;
    m["seeds"] = seeds;
    json sims;
    sims["total"] = res.simulations;
    json by_stage;
    for (const auto& s : res.stages) by_stage[s.stage] = s.simulations;
    sims["by_stage"] = by_stage;
    m["simulations"] = sims;
    json data;
    data["total"] = res.datasets;
    data["per_simulation"] = p.model->datasets_per_call();
    m["datasets"] = data;
    m["counter_check"] = {{"instrumented", p.model->calls()}, {"reported", res.simulations}, {"match", true}};
    m["names"] = p.names;
    if (res.truth) m["truth"] = *res.truth;
    m["details"] = mo.details;
    if (mo.nn_distance) m["acquisition_dispersion"] = {{"mean_nn_distance", *mo.nn_distance},
                                                       {"distinct", *mo.distinct}};
    if (res.posterior) m["posterior"] = posterior_summary(*res.posterior, p.names);
    m["outputs"] = out.index();
    res.manifest = m;
    write_file_atomic(res.dir / "manifest.json", m.dump(2) + "\n");
  } catch (const std::exception& e) {
    throw StageError("output", e.what());
  }
  return res;
}

fs::path run_comparison(const ComparisonConfig& cc, const RunOptions& options) {
  const std::vector<ExperimentConfig> configs = load_members(cc);
  const auto names = configs[0].free_names();
  const fs::path dir = resolve_output_dir(cc.output_dir, options);
  const fs::path table_path = dir / "comparison.csv";

  std::vector<std::string> header{"experiment", "method", "simulations", "datasets"};
  for (const auto& c : prefixed("mean_", names)) header.push_back(c);
  for (const auto& c : prefixed("ci_low_", names)) header.push_back(c);
  for (const auto& c : prefixed("ci_high_", names)) header.push_back(c);
  for (const auto& c : prefixed("error_", names)) header.push_back(c);
  header.push_back("mean_nn_distance");
  header.push_back("distinct_acquisitions");
  CsvTable table(header);

  // Reference point for errors: the observed sample mean for the Gaussian
  // model (the posterior mode under a flat prior), otherwise the generating
  // parameters when known.
  std::optional<std::vector<double>> reference = configs[0].truth();
  if (configs[0].model.id == ModelId::Gaussian) {
    reference = build_problem(configs[0]).observed.phi;
  }

  for (const auto& cfg : configs) {
    RunResult r = run_experiment(cfg, options);
    std::vector<std::string> row{cfg.name, to_string(cfg.method), std::to_string(r.simulations),
                                 std::to_string(r.datasets)};
    const std::size_t d = names.size();
    std::vector<std::string> means(d), lo(d), hi(d), err(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (!r.posterior) continue;
      const double mu = r.posterior->mean()[j];
      means[j] = format_double(mu);
      lo[j] = format_double(r.posterior->quantile(j, 0.025));
      hi[j] = format_double(r.posterior->quantile(j, 0.975));
      if (reference) err[j] = format_double(std::abs(mu - (*reference)[j]));
    }
    for (auto* v : {&means, &lo, &hi, &err}) row.insert(row.end(), v->begin(), v->end());
    row.push_back(r.nn_distance ? format_double(*r.nn_distance) : "");
    row.push_back(r.distinct_acquisitions ? std::to_string(*r.distinct_acquisitions) : "");
    table.row(std::move(row));
    // Rewritten after every member so completed rows survive a later failure.
    try {
      write_file_atomic(table_path, table.str());
    } catch (const std::exception& e) {
      throw StageError("output", e.what());
    }
  }
  return table_path;
}

void export_plots_data(const fs::path& run_dir, std::size_t points) {
  if (points < 2) throw std::invalid_argument("export-plots-data: need at least 2 points per axis");
  const json state = json::parse(read_file(run_dir / "bo_state.json"));
  const ExperimentConfig cfg = parse_config(state.at("config"));
  const Box bounds = cfg.bounds();
  const auto names = cfg.free_names();
  const std::size_t d = bounds.dims();
  const ResponseTransform& resp = cfg.bolfi.response;

  Evidence ev(d);
  for (const auto& e : state.at("evidence")) {
    ev.append(e.at("theta").get<std::vector<double>>(), e.at("response").get<double>());
  }
  const GpPosterior gp = GpPosterior::build(ev, hyperparams_from_json(state.at("final_hyperparameters")));
  const BoxMinimum best = argmin_jhat(gp, bounds, resp);

  CsvTable profile({"dim", "parameter", "theta", "jhat", "mean", "sd"});
  for (std::size_t j = 0; j < d; ++j) {
    ParamVector x = best.x;
    for (double v : linspace(bounds.lower[j], bounds.upper[j], points)) {
      x[j] = v;
      const PosteriorPoint pt = gp.at(x);
      profile.row({std::to_string(j), names[j], format_double(v), format_double(estimate_j(gp, x, resp)),
                   format_double(pt.mean), format_double(std::sqrt(pt.var_latent))});
    }
  }

  CsvTable slices({"panel", "param_x", "param_y", "x", "y", "jhat"});
  std::size_t panel = 0;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a + 1; b < d; ++b, ++panel) {
      const auto xs = linspace(bounds.lower[a], bounds.upper[a], points);
      const auto ys = linspace(bounds.lower[b], bounds.upper[b], points);
      ParamVector x = best.x;
      for (double vy : ys) {
        for (double vx : xs) {
          x[a] = vx;
          x[b] = vy;
          slices.row({std::to_string(panel), names[a], names[b], format_double(vx), format_double(vy),
                      format_double(estimate_j(gp, x, resp))});
        }
      }
    }
  }

  json center;
  center["names"] = names;
  center["argmin"] = best.x;
  center["jhat_min"] = estimate_j(gp, best.x, resp);
  center["panels"] = panel;
  write_file_atomic(run_dir / "plots" / "jhat_profile.csv", profile.str());
  write_file_atomic(run_dir / "plots" / "jhat_slices.csv", slices.str());
  write_file_atomic(run_dir / "plots" / "jhat_center.json", center.dump(2) + "\n");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool valid_cell(const std::string& v, const std::string& type, bool nullable) {
  if (v.empty()) return nullable;
  if (type == "string") return true;
  if (type == "flag") return v == "0" || v == "1";
  if (type == "integer") {
    return std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; });
  }
  if (type == "number") {
    if (v == "nan" || v == "-nan" || v == "inf" || v == "-inf") return true;
    char* end = nullptr;
    std::strtod(v.c_str(), &end);
    return end && *end == '\0';
  }
  return false;
}

void check_csv(const std::string& file, const std::string& content, const json& schema,
               std::vector<std::string>& problems) {
  std::istringstream is(content);
  std::string line;
  if (!std::getline(is, line)) {
    problems.push_back(file + ": empty file");
    return;
  }
  const auto header = split_line(line);
  // Map each header column to its column spec, consuming repeated groups.
  std::vector<const json*> spec_of;
  std::size_t h = 0;
  for (const auto& col : schema.at("columns")) {
    const std::string type = col.at("type");
    if (col.contains("prefix")) {
      const std::string pre = col.at("prefix");
      std::size_t n = 0;
      while (h < header.size() && header[h].rfind(pre, 0) == 0) {
        spec_of.push_back(&col);
        ++h;
        ++n;
      }
      if (n == 0) {
        problems.push_back(file + ": expected at least one '" + pre + "*' column at position " + std::to_string(h));
        return;
      }
    } else {
      const std::string name = col.at("name");
      if (h >= header.size() || header[h] != name) {
        problems.push_back(file + ": expected column '" + name + "' at position " + std::to_string(h) + ", found '" +
                           (h < header.size() ? header[h] : std::string("<end>")) + "'");
        return;
      }
      spec_of.push_back(&col);
      ++h;
    }
  }
  if (h != header.size()) {
    problems.push_back(file + ": unexpected column '" + header[h] + "'");
    return;
  }
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      problems.push_back(file + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                         " fields, expected " + std::to_string(header.size()));
      return;
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const json& spec = *spec_of[c];
      const bool nullable = spec.value("nullable", false);
      if (!valid_cell(cells[c], spec.at("type"), nullable)) {
        problems.push_back(file + ": row " + std::to_string(row) + ", column '" + header[c] + "': '" + cells[c] +
                           "' is not a valid " + spec.at("type").get<std::string>());
        return;
      }
    }
  }
}

bool json_type_ok(const json& v, const std::string& type) {
  if (type == "string") return v.is_string();
  if (type == "number") return v.is_number();
  if (type == "integer") return v.is_number_integer();
  if (type == "boolean") return v.is_boolean();
  if (type == "array") return v.is_array();
  if (type == "object") return v.is_object();
  return false;
}

void check_json(const std::string& file, const std::string& content, const json& schema,
                std::vector<std::string>& problems) {
  json doc;
  try {
    doc = json::parse(content);
  } catch (const std::exception& e) {
    problems.push_back(file + ": not valid JSON");
    return;
  }
  for (const auto& [key, type] : schema.at("required").items()) {
    if (!doc.contains(key)) {
      problems.push_back(file + ": missing key '" + key + "'");
    } else if (!json_type_ok(doc.at(key), type.get<std::string>())) {
      problems.push_back(file + ": key '" + key + "' is not a " + type.get<std::string>());
    }
  }
}

}  // namespace

std::vector<std::string> check_outputs(const fs::path& run_dir, const fs::path& schema_dir) {
  std::vector<std::string> problems;
  if (!fs::is_directory(schema_dir)) return {"schema directory not found: " + schema_dir.string()};
  const fs::path manifest_path = run_dir / "manifest.json";
  std::string method;
  if (fs::exists(manifest_path)) {
    try {
      method = json::parse(read_file(manifest_path)).value("method", "");
    } catch (const std::exception&) {
    }
  } else {
    problems.push_back("manifest.json: missing");
  }

  std::vector<fs::path> schema_files;
  for (const auto& e : fs::directory_iterator(schema_dir)) {
    if (e.path().extension() == ".json") schema_files.push_back(e.path());
  }
  std::sort(schema_files.begin(), schema_files.end());

  for (const auto& sf : schema_files) {
    json schema;
    try {
      schema = json::parse(read_file(sf));
    } catch (const std::exception& e) {
      problems.push_back(sf.filename().string() + ": unreadable schema");
      continue;
    }
    if (!schema.contains("file")) continue;  // e.g. the config schema
    const std::string file = schema.at("file");
    const fs::path target = run_dir / file;
    if (!fs::exists(target)) {
      bool required = false;
      for (const auto& m : schema.value("required_for", json::array())) required = required || m == method;
      if (required) problems.push_back(file + ": missing (required for method '" + method + "')");
      continue;
    }
    const std::string content = read_file(target);
    if (schema.at("format") == "csv") {
      check_csv(file, content, schema, problems);
    } else {
      check_json(file, content, schema, problems);
    }
  }
  return problems;
}

}  // namespace bolfi::harness

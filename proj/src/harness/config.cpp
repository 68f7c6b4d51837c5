#include "bolfi/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace bolfi::harness {

namespace {

// Strict view of one JSON object: every key must be read before finish().
class Section {
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    if (!has(key)) fail("missing required key '" + key + "'");
    seen_.insert(key);
    return j_.at(key);
  }

  Section sub(const std::string& key) { return Section(raw(key), where(key)); }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) fail_key(key, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail_key(key, "must be finite");
    return x;
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  double positive(const std::string& key, double fallback) {
    const double x = number(key, fallback);
    if (!(x > 0.0)) fail_key(key, "must be positive");
    return x;
  }

  std::uint64_t count(const std::string& key) {
    const json& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    // Integral floats such as 1e7 are accepted.
    if (v.is_number_float()) {
      const double x = v.get<double>();
      if (x >= 0.0 && x < 9.2e18 && std::floor(x) == x) return static_cast<std::uint64_t>(x);
    }
    fail_key(key, "expected a non-negative integer");
  }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    return has(key) ? count(key) : fallback;
  }

  std::string text(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) fail_key(key, "expected a string");
    return v.get<std::string>();
  }
  std::string text(const std::string& key, const std::string& fallback) {
    return has(key) ? text(key) : fallback;
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) fail_key(key, "expected true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) fail_key(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number() || !std::isfinite(e.get<double>())) fail_key(key, "expected an array of finite numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::string choice(const std::string& key, std::initializer_list<const char*> options,
                     const std::string& fallback = "") {
    if (!has(key) && !fallback.empty()) return fallback;
    const std::string s = text(key);
    for (const char* o : options) {
      if (s == o) return s;
    }
    std::string list;
    for (const char* o : options) list += std::string(list.empty() ? "" : ", ") + o;
    fail_key(key, "'" + s + "' is not one of: " + list);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail("unknown key '" + it.key() + "'");
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError((path_.empty() ? std::string("config") : path_) + ": " + msg);
  }
  [[noreturn]] void fail_key(const std::string& key, const std::string& msg) const {
    throw ConfigError(where(key) + ": " + msg);
  }

private:
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  json j_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::vector<std::string>& model_parameter_names(ModelId id) {
  static const std::vector<std::string> gaussian{"theta"};
  static const std::vector<std::string> ricker{"log_r", "sigma", "phi"};
  return id == ModelId::Gaussian ? gaussian : ricker;
}

ModelSpec parse_model(Section s) {
  ModelSpec m;
  m.id = s.choice("id", {"gaussian", "ricker"}) == "gaussian" ? ModelId::Gaussian : ModelId::Ricker;
  m.n = s.count("n");
  if (m.n < 1) s.fail_key("n", "must be at least 1");
  if (m.id == ModelId::Ricker) {
    m.burn_in = s.count("burn_in", 50);
    if (m.n < 20) s.fail_key("n", "the Ricker statistics need at least 20 observations");
  }

  const auto& names = model_parameter_names(m.id);
  const json& params = s.raw("parameters");
  if (!params.is_array() || params.size() != names.size()) {
    s.fail_key("parameters", "expected " + std::to_string(names.size()) + " entries");
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    Section p(params[i], "model.parameters[" + std::to_string(i) + "]");
    ParameterSpec ps;
    ps.name = p.text("name");
    if (ps.name != names[i]) p.fail("expected parameter '" + names[i] + "', got '" + ps.name + "'");
    if (p.has("value")) {
      ps.free = false;
      ps.value = p.number("value");
      if (p.has("lower") || p.has("upper")) p.fail("a fixed parameter takes no bounds");
    } else {
      ps.lower = p.number("lower");
      ps.upper = p.number("upper");
      if (!(ps.upper > ps.lower)) p.fail("upper must exceed lower");
    }
    p.finish();
    m.parameters.push_back(ps);
  }
  bool any_free = false;
  for (const auto& p : m.parameters) any_free = any_free || p.free;
  if (!any_free) s.fail_key("parameters", "at least one parameter must be free");

  Section o = s.sub("observed");
  if (o.has("theta_true")) {
    m.observed.kind = ObservedSpec::Kind::Generated;
    m.observed.theta_true = o.numbers("theta_true");
    m.observed.seed = o.count("seed");
    if (m.observed.theta_true.size() != names.size()) o.fail_key("theta_true", "wrong length");
  } else if (o.has("data")) {
    m.observed.kind = ObservedSpec::Kind::Data;
    m.observed.values = o.numbers("data");
    if (m.observed.values.size() != m.n) o.fail_key("data", "length must equal model.n");
  } else if (o.has("summary")) {
    m.observed.kind = ObservedSpec::Kind::Summary;
    m.observed.values = o.numbers("summary");
    const std::size_t p = m.id == ModelId::Gaussian ? 1 : kRickerStatCount;
    if (m.observed.values.size() != p) o.fail_key("summary", "expected " + std::to_string(p) + " statistics");
  } else {
    o.fail("one of 'theta_true', 'data' or 'summary' is required");
  }
  o.finish();
  s.finish();
  return m;
}

ResponseTransform parse_response(Section& s) {
  const std::string kind = s.choice("response", {"direct", "log"}, "direct");
  if (kind == "direct") {
    if (s.has("response_offset")) s.fail_key("response_offset", "only valid with response 'log'");
    return ResponseTransform::direct();
  }
  return ResponseTransform::log(s.number("response_offset", 0.0));
}

BolfiSpec parse_bolfi(Section s, const ExperimentConfig& cfg) {
  BolfiSpec b;
  b.T = s.count("T");
  b.t0 = s.count("t0", 10);
  if (b.t0 < 2) s.fail_key("t0", "must be at least 2");
  if (b.T < b.t0) s.fail_key("T", "must be at least t0");
  b.rule = s.choice("rule", {"stochastic", "deterministic"}, "stochastic") == "stochastic"
               ? AcquisitionRule::Stochastic
               : AcquisitionRule::Deterministic;
  b.rel_tolerance = s.number("rel_tolerance", 0.01);
  if (b.rel_tolerance < 0.0 || b.rel_tolerance > 1.0) s.fail_key("rel_tolerance", "must lie in [0, 1]");
  b.batch_size = s.count("batch_size", 1);
  if (b.batch_size < 1) s.fail_key("batch_size", "must be at least 1");
  b.epsilon_eta = s.number("epsilon_eta", 0.1);
  if (!(b.epsilon_eta > 0.0 && b.epsilon_eta < 1.0)) s.fail_key("epsilon_eta", "must lie in (0, 1)");
  b.response = parse_response(s);
  b.mean = s.choice("mean", {"constant", "quadratic"}, "constant") == "constant" ? MeanFunction::Kind::Constant
                                                                                   : MeanFunction::Kind::Quadratic;
  b.refit_every = s.count("refit_every", 10);
  if (b.refit_every < 1) s.fail_key("refit_every", "must be at least 1");
  b.prior_modulation = s.flag("prior_modulation", false);
  b.curve_points = s.count("curve_points", 200);

  if (s.has("posterior")) {
    Section p = s.sub("posterior");
    const std::string lik = p.choice("likelihood", {"model-lu", "synthetic"});
    b.posterior.likelihood = lik == "model-lu" ? BolfiPosteriorSpec::Likelihood::ModelLu
                                               : BolfiPosteriorSpec::Likelihood::Synthetic;
    if (b.posterior.likelihood == BolfiPosteriorSpec::Likelihood::Synthetic &&
        cfg.discrepancy.kind != DiscrepancyKind::SyntheticLoglik) {
      p.fail_key("likelihood", "'synthetic' requires discrepancy kind 'synthetic-loglik'");
    }
    if (b.posterior.likelihood == BolfiPosteriorSpec::Likelihood::ModelLu) {
      b.posterior.h = p.number("h", 0.0);
      if (b.posterior.h < 0.0) p.fail_key("h", "must be positive (or omitted)");
      b.posterior.threshold_quantile = p.number("threshold_quantile", 0.05);
      if (!(b.posterior.threshold_quantile > 0.0 && b.posterior.threshold_quantile < 1.0)) {
        p.fail_key("threshold_quantile", "must lie in (0, 1)");
      }
    }
    b.posterior.iterations = p.count("iterations", 3);
    b.posterior.samples = p.count("samples", 25000);
    if (b.posterior.iterations < 1) p.fail_key("iterations", "must be at least 1");
    if (b.posterior.samples < 2) p.fail_key("samples", "must be at least 2");
    p.finish();
  }
  s.finish();
  return b;
}

McmcSpec parse_mcmc(Section s, std::size_t d, const Box& bounds) {
  McmcSpec m;
  m.iterations = s.count("iterations");
  if (m.iterations < 1) s.fail_key("iterations", "must be at least 1");
  m.proposal_sd = s.numbers("proposal_sd");
  if (m.proposal_sd.size() != d) s.fail_key("proposal_sd", "one entry per free parameter");
  for (double v : m.proposal_sd) {
    if (!(v > 0.0)) s.fail_key("proposal_sd", "entries must be positive");
  }
  if (s.has("log_scale")) {
    const json& v = s.raw("log_scale");
    if (!v.is_array() || v.size() != d) s.fail_key("log_scale", "one boolean per free parameter");
    for (const auto& e : v) {
      if (!e.is_boolean()) s.fail_key("log_scale", "one boolean per free parameter");
      m.log_scale.push_back(e.get<bool>());
    }
  } else {
    m.log_scale.assign(d, false);
  }
  m.burn_in_fraction = s.number("burn_in_fraction", 0.25);
  if (m.burn_in_fraction < 0.0 || m.burn_in_fraction >= 1.0) s.fail_key("burn_in_fraction", "must lie in [0, 1)");
  m.start = s.numbers("start");
  if (m.start.size() != d) s.fail_key("start", "one entry per free parameter");
  if (!bounds.contains(m.start)) s.fail_key("start", "must lie inside the parameter bounds");
  for (std::size_t j = 0; j < d; ++j) {
    if (m.log_scale[j] && !(m.start[j] > 0.0)) s.fail_key("start", "log-scale coordinates must start positive");
  }
  s.finish();
  return m;
}

AbcSpec parse_abc(Section s) {
  AbcSpec a;
  a.h = s.number("h");
  if (!(a.h > 0.0)) s.fail_key("h", "must be positive");
  if (s.has("proposals") == s.has("accepted")) s.fail("exactly one of 'proposals' or 'accepted' is required");
  a.proposals = s.count("proposals", 0);
  a.accepted = s.count("accepted", 0);
  if (s.has("proposals") && a.proposals < 1) s.fail_key("proposals", "must be at least 1");
  if (s.has("accepted") && a.accepted < 1) s.fail_key("accepted", "must be at least 1");
  a.cap = s.count("simulation_cap", 10000000);
  s.finish();
  return a;
}

PmcSpec parse_pmc(Section s) {
  PmcSpec p;
  p.generations = s.count("generations", 3);
  if (p.generations < 1) s.fail_key("generations", "must be at least 1");
  p.target_accepted = s.count("target_accepted", 1000);
  if (p.target_accepted < 2) s.fail_key("target_accepted", "must be at least 2");
  p.simulation_cap = s.count("simulation_cap", 10000000);
  if (s.has("thresholds")) {
    p.thresholds = s.numbers("thresholds");
    if (p.thresholds.size() != p.generations) s.fail_key("thresholds", "one threshold per generation");
    for (std::size_t g = 0; g < p.thresholds.size(); ++g) {
      if (!(p.thresholds[g] > 0.0)) s.fail_key("thresholds", "must be positive");
      if (g && p.thresholds[g] > p.thresholds[g - 1]) s.fail_key("thresholds", "must be non-increasing");
    }
  } else {
    p.quantile = s.number("quantile", 0.1);
    if (!(p.quantile > 0.0 && p.quantile < 1.0)) s.fail_key("quantile", "must lie in (0, 1)");
    p.initial_simulations = s.count("initial_simulations", 1000);
    if (p.initial_simulations < 2) s.fail_key("initial_simulations", "must be at least 2");
  }
  s.finish();
  return p;
}

GridSpec parse_grid(Section s, const ExperimentConfig& cfg) {
  GridSpec g;
  g.points = s.count("points", 50);
  if (g.points < 2) s.fail_key("points", "must be at least 2");
  g.kernel = s.choice("kernel", {"uniform", "synthetic"}, "uniform") == "uniform" ? GridSpec::Kernel::Uniform
                                                                                  : GridSpec::Kernel::Synthetic;
  if (g.kernel == GridSpec::Kernel::Uniform) {
    if (cfg.discrepancy.kind == DiscrepancyKind::SyntheticLoglik) {
      s.fail_key("kernel", "'uniform' needs a discrepancy other than synthetic-loglik");
    }
    g.replicates = s.count("replicates", 300);
    if (g.replicates < 1) s.fail_key("replicates", "must be at least 1");
    g.h = s.number("h");
    if (!(g.h > 0.0)) s.fail_key("h", "must be positive");
  } else if (cfg.discrepancy.kind != DiscrepancyKind::SyntheticLoglik) {
    s.fail_key("kernel", "'synthetic' requires discrepancy kind 'synthetic-loglik'");
  }
  s.finish();
  return g;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::Bolfi: return "bolfi";
    case Method::SyntheticMcmc: return "synthetic-mcmc";
    case Method::AbcRejection: return "abc-rejection";
    case Method::PmcAbc: return "pmc-abc";
    case Method::GridLikelihood: return "grid-likelihood";
  }
  return "?";
}

std::string to_string(ModelId m) { return m == ModelId::Gaussian ? "gaussian" : "ricker"; }

Box ExperimentConfig::bounds() const {
  std::vector<double> lo, hi;
  for (const auto& p : model.parameters) {
    if (!p.free) continue;
    lo.push_back(p.lower);
    hi.push_back(p.upper);
  }
  return Box(std::move(lo), std::move(hi));
}

std::vector<std::string> ExperimentConfig::free_names() const {
  std::vector<std::string> out;
  for (const auto& p : model.parameters) {
    if (p.free) out.push_back(p.name);
  }
  return out;
}

ParameterMap ExperimentConfig::parameter_map() const {
  ParameterMap map;
  for (std::size_t i = 0; i < model.parameters.size(); ++i) {
    const auto& p = model.parameters[i];
    map.names.push_back(p.name);
    map.fixed_values.push_back(p.free ? 0.0 : p.value);
    if (p.free) map.free_indices.push_back(i);
  }
  return map;
}

std::optional<std::vector<double>> ExperimentConfig::truth() const {
  if (model.observed.kind != ObservedSpec::Kind::Generated) return std::nullopt;
  std::vector<double> out;
  for (std::size_t i = 0; i < model.parameters.size(); ++i) {
    if (model.parameters[i].free) out.push_back(model.observed.theta_true[i]);
  }
  return out;
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig cfg;
  Section top(doc, "");
  cfg.name = top.text("name");
  if (cfg.name.empty()) top.fail_key("name", "must not be empty");
  cfg.model = parse_model(top.sub("model"));
  const std::size_t d = cfg.free_names().size();

  {
    Section s = top.sub("discrepancy");
    const std::string kind =
        s.choice("kind", {"squared-l2", "l1-normalized", "gaussian-kernel", "synthetic-loglik"});
    cfg.discrepancy.kind = kind == "squared-l2"        ? DiscrepancyKind::SquaredL2
                           : kind == "l1-normalized"   ? DiscrepancyKind::L1Normalized
                           : kind == "gaussian-kernel" ? DiscrepancyKind::GaussianKernel
                                                       : DiscrepancyKind::SyntheticLoglik;
    if (cfg.discrepancy.kind == DiscrepancyKind::SyntheticLoglik) {
      cfg.discrepancy.replicates = s.count("replicates");
      if (cfg.discrepancy.replicates < 2) s.fail_key("replicates", "must be at least 2");
    }
    if (cfg.discrepancy.kind == DiscrepancyKind::GaussianKernel) {
      cfg.discrepancy.bandwidth = s.numbers("bandwidth");
      const std::size_t p = cfg.model.id == ModelId::Gaussian ? 1 : kRickerStatCount;
      if (cfg.discrepancy.bandwidth.size() != p) {
        s.fail_key("bandwidth", "expected " + std::to_string(p) + " entries (one per statistic)");
      }
      for (double v : cfg.discrepancy.bandwidth) {
        if (!(v > 0.0)) s.fail_key("bandwidth", "entries must be positive");
      }
    }
    s.finish();
  }

  {
    Section s = top.has("prior") ? top.sub("prior") : Section(json::object({{"kind", "uniform"}}), "prior");
    const std::string kind = s.choice("kind", {"uniform", "gaussian"});
    if (kind == "gaussian") {
      cfg.prior.kind = PriorSpec::Kind::Gaussian;
      cfg.prior.mean = s.numbers("mean");
      cfg.prior.sd = s.numbers("sd");
      if (cfg.prior.mean.size() != d || cfg.prior.sd.size() != d) s.fail("mean and sd need one entry per free parameter");
      for (double v : cfg.prior.sd) {
        if (!(v > 0.0)) s.fail_key("sd", "entries must be positive");
      }
    }
    s.finish();
  }

  const std::string method =
      top.choice("method", {"bolfi", "synthetic-mcmc", "abc-rejection", "pmc-abc", "grid-likelihood"});
  static const std::vector<std::pair<std::string, std::string>> sections{
      {"bolfi", "bolfi"},
      {"synthetic-mcmc", "synthetic_mcmc"},
      {"abc-rejection", "abc_rejection"},
      {"pmc-abc", "pmc_abc"},
      {"grid-likelihood", "grid_likelihood"}};
  for (const auto& [m, key] : sections) {
    if (m != method && top.has(key)) top.fail_key(key, "section does not apply to method '" + method + "'");
  }

  const Box bounds = cfg.bounds();
  if (method == "bolfi") {
    cfg.method = Method::Bolfi;
    cfg.bolfi = parse_bolfi(top.sub("bolfi"), cfg);
  } else if (method == "synthetic-mcmc") {
    cfg.method = Method::SyntheticMcmc;
    if (cfg.discrepancy.kind != DiscrepancyKind::SyntheticLoglik) {
      top.fail_key("method", "'synthetic-mcmc' requires discrepancy kind 'synthetic-loglik'");
    }
    cfg.mcmc = parse_mcmc(top.sub("synthetic_mcmc"), d, bounds);
  } else if (method == "abc-rejection") {
    cfg.method = Method::AbcRejection;
    cfg.abc = parse_abc(top.sub("abc_rejection"));
  } else if (method == "pmc-abc") {
    cfg.method = Method::PmcAbc;
    cfg.pmc = parse_pmc(top.has("pmc_abc") ? top.sub("pmc_abc") : Section(json::object(), "pmc_abc"));
  } else {
    cfg.method = Method::GridLikelihood;
    if (d != 1) top.fail_key("method", "'grid-likelihood' supports exactly one free parameter");
    cfg.grid = parse_grid(top.sub("grid_likelihood"), cfg);
  }

  cfg.seed = top.count("seed");
  cfg.output_dir = top.text("output_dir");
  if (cfg.output_dir.empty()) top.fail_key("output_dir", "must not be empty");
  top.finish();
  cfg.echo = doc;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": not valid JSON: " + e.what());
  } catch (const std::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

ComparisonConfig load_comparison(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": not valid JSON: " + e.what());
  } catch (const std::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  Section top(doc, "");
  ComparisonConfig cfg;
  cfg.name = top.text("name");
  cfg.output_dir = top.text("output_dir");
  const json& list = top.raw("experiments");
  if (!list.is_array() || list.size() < 2) top.fail_key("experiments", "list at least two experiment files");
  const auto base = path.parent_path();
  for (const auto& e : list) {
    if (!e.is_string()) top.fail_key("experiments", "entries must be file paths");
    std::filesystem::path p = e.get<std::string>();
    cfg.experiments.push_back(p.is_absolute() ? p : base / p);
  }
  top.finish();
  return cfg;
}

std::vector<ExperimentConfig> load_members(const ComparisonConfig& cc) {
  std::vector<ExperimentConfig> configs;
  for (const auto& path : cc.experiments) configs.push_back(load_config(path));
  for (std::size_t i = 1; i < configs.size(); ++i) {
    if (configs[i].echo.at("model") != configs[0].echo.at("model")) {
      throw ConfigError("comparison: '" + configs[i].name + "' does not share the model and observed data of '" +
                        configs[0].name + "'");
    }
  }
  return configs;
}

bool is_comparison_file(const std::filesystem::path& path) {
  try {
    const json doc = json::parse(read_file(path));
    return doc.is_object() && doc.contains("experiments");
  } catch (const std::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace bolfi::harness

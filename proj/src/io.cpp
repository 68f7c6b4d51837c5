#include "bolfi/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bolfi {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvTable& CsvTable::row(std::vector<std::string> fields) {
  if (fields.size() != header_.size()) throw std::invalid_argument("CSV row width differs from header");
  rows_.push_back(std::move(fields));
  return *this;
}

std::string CsvTable::str() const {
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) os << ',';
      os << r[i];
    }
    os << '\n';
  };
  emit(header_);
  for (const auto& r : rows_) emit(r);
  return os.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << content;
    if (!f.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::vector<std::string> prefixed(const std::string& prefix, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const auto& n : names) out.push_back(prefix + n);
  return out;
}

json to_json(const GpHyperparams& hp) {
  json j;
  j["signal_variance"] = hp.signal_variance;
  j["length_scales"] = hp.length_scales;
  j["noise_variance"] = hp.noise_variance;
  json m;
  if (hp.mean.kind == MeanFunction::Kind::Constant) {
    m["kind"] = "constant";
  } else {
    m["kind"] = "quadratic";
    m["a"] = hp.mean.a;
    m["b"] = hp.mean.b;
  }
  m["c"] = hp.mean.c;
  j["mean"] = m;
  return j;
}

GpHyperparams hyperparams_from_json(const json& j) {
  GpHyperparams hp;
  hp.signal_variance = j.at("signal_variance").get<double>();
  hp.length_scales = j.at("length_scales").get<std::vector<double>>();
  hp.noise_variance = j.at("noise_variance").get<double>();
  const json& m = j.at("mean");
  if (m.at("kind").get<std::string>() == "constant") {
    hp.mean = MeanFunction::constant(m.at("c").get<double>());
  } else {
    hp.mean = MeanFunction::quadratic(m.at("a").get<std::vector<double>>(), m.at("b").get<std::vector<double>>(),
                                      m.at("c").get<double>());
  }
  hp.validate();
  return hp;
}

json evidence_json(const BoState& state) {
  json arr = json::array();
  for (std::size_t i = 0; i < state.evidence.size(); ++i) {
    auto th = state.evidence.theta(i);
    arr.push_back({{"t", i + 1},
                   {"theta", std::vector<double>(th.begin(), th.end())},
                   {"delta", state.discrepancies[i]},
                   {"response", state.evidence.response(i)}});
  }
  return arr;
}

json bo_state_json(const BoState& state, const json& config_echo) {
  json j;
  j["config"] = config_echo;
  j["evidence"] = evidence_json(state);
  json hist = json::array();
  for (const auto& h : state.hyper_history) {
    hist.push_back({{"t", h.t}, {"score", h.score}, {"improved", h.improved}, {"hyperparameters", to_json(h.hyper)}});
  }
  j["hyperparameter_history"] = hist;
  j["final_hyperparameters"] = to_json(state.gp.hyperparams());
  json log = json::array();
  for (const auto& r : state.log) {
    log.push_back({{"t", r.t},
                   {"batch_index", r.batch_index},
                   {"proposed", r.proposed},
                   {"minimizer", r.minimizer},
                   {"acq_min", r.acq_min},
                   {"acq_max", r.acq_max},
                   {"eta_sq", r.eta_sq},
                   {"stds", r.stds},
                   {"offset", r.offset},
                   {"retries", r.retries}});
  }
  j["acquisitions"] = log;
  json fails = json::array();
  for (const auto& f : state.failures) fails.push_back({{"t", f.t}, {"theta", f.theta}, {"message", f.message}});
  j["failures"] = fails;
  j["simulations"] = state.simulations;
  j["datasets"] = state.datasets;
  return j;
}

CsvTable evidence_csv(const BoState& state, const std::vector<std::string>& names) {
  std::vector<std::string> header{"t"};
  for (const auto& c : prefixed("theta_", names)) header.push_back(c);
  header.push_back("delta");
  header.push_back("response");
  CsvTable t(header);
  for (std::size_t i = 0; i < state.evidence.size(); ++i) {
    std::vector<std::string> r{std::to_string(i + 1)};
    for (double v : state.evidence.theta(i)) r.push_back(format_double(v));
    r.push_back(format_double(state.discrepancies[i]));
    r.push_back(format_double(state.evidence.response(i)));
    t.row(std::move(r));
  }
  return t;
}

CsvTable acquisitions_csv(const BoState& state, const std::vector<std::string>& names) {
  std::vector<std::string> header{"t", "batch_index"};
  for (const auto& c : prefixed("proposed_", names)) header.push_back(c);
  for (const auto& c : prefixed("minimizer_", names)) header.push_back(c);
  for (const auto& c : prefixed("std_", names)) header.push_back(c);
  for (const auto& s : {"acq_min", "acq_max", "eta_sq", "retries"}) header.push_back(s);
  CsvTable t(header);
  for (const auto& rec : state.log) {
    std::vector<std::string> r{std::to_string(rec.t), std::to_string(rec.batch_index)};
    for (double v : rec.proposed) r.push_back(format_double(v));
    for (double v : rec.minimizer) r.push_back(format_double(v));
    for (std::size_t j = 0; j < names.size(); ++j) r.push_back(rec.stds.empty() ? "0" : format_double(rec.stds[j]));
    r.push_back(format_double(rec.acq_min));
    r.push_back(format_double(rec.acq_max));
    r.push_back(format_double(rec.eta_sq));
    r.push_back(std::to_string(rec.retries));
    t.row(std::move(r));
  }
  return t;
}

CsvTable particles_csv_header(const std::vector<std::string>& names) {
  std::vector<std::string> header{"generation"};
  for (const auto& c : prefixed("theta_", names)) header.push_back(c);
  header.push_back("weight");
  return CsvTable(header);
}

void append_particles(CsvTable& table, const WeightedParticles& particles, std::size_t generation) {
  for (std::size_t i = 0; i < particles.size(); ++i) {
    std::vector<std::string> r{std::to_string(generation)};
    for (double v : particles.theta(i)) r.push_back(format_double(v));
    r.push_back(format_double(particles.weights[i]));
    table.row(std::move(r));
  }
}

CsvTable chain_csv(const McmcChain& chain, const std::vector<std::string>& names) {
  std::vector<std::string> header{"iteration"};
  for (const auto& c : prefixed("theta_", names)) header.push_back(c);
  header.push_back("loglik");
  header.push_back("burn_in");
  CsvTable t(header);
  for (std::size_t i = 0; i < chain.length(); ++i) {
    std::vector<std::string> r{std::to_string(i)};
    for (std::size_t j = 0; j < chain.dims; ++j) r.push_back(format_double(chain.samples[i * chain.dims + j]));
    r.push_back(format_double(chain.loglik[i]));
    r.push_back(i < chain.burn_in ? "1" : "0");
    t.row(std::move(r));
  }
  return t;
}

CsvTable summary_stats_csv(const std::vector<SummaryStats>& stats, const std::vector<std::string>& stat_names) {
  std::vector<std::string> header{"replicate"};
  for (const auto& n : stat_names) header.push_back(n);
  header.push_back("degenerate");
  CsvTable t(header);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    std::vector<std::string> r{std::to_string(i)};
    for (double v : stats[i].phi) r.push_back(format_double(v));
    r.push_back(stats[i].degenerate ? "1" : "0");
    t.row(std::move(r));
  }
  return t;
}

}  // namespace bolfi

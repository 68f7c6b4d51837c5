#pragma once

// Experiment configuration: one JSON file per experiment, validated in full
// (unknown keys rejected) before anything is simulated.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bolfi/bo.hpp"
#include "bolfi/io.hpp"
#include "bolfi/models.hpp"

namespace bolfi::harness {

/// Invalid configuration (exit code 2).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Runtime failure inside a named stage (exit code 1).
class StageError : public std::runtime_error {
public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

enum class ModelId { Gaussian, Ricker };
enum class DiscrepancyKind { SquaredL2, L1Normalized, GaussianKernel, SyntheticLoglik };
enum class Method { Bolfi, SyntheticMcmc, AbcRejection, PmcAbc, GridLikelihood };

std::string to_string(Method m);
std::string to_string(ModelId m);

struct ParameterSpec {
  std::string name;
  bool free = true;
  double lower = 0.0;
  double upper = 0.0;
  double value = 0.0;  // fixed parameters
};

struct ObservedSpec {
  enum class Kind { Generated, Data, Summary };
  Kind kind = Kind::Generated;
  std::vector<double> theta_true;  // full parameter vector (Generated)
  std::uint64_t seed = 0;
  std::vector<double> values;  // raw data or summary vector
};

struct ModelSpec {
  ModelId id = ModelId::Gaussian;
  std::size_t n = 10;
  std::size_t burn_in = 50;
  std::vector<ParameterSpec> parameters;
  ObservedSpec observed;
};

struct DiscrepancySpec {
  DiscrepancyKind kind = DiscrepancyKind::SquaredL2;
  std::size_t replicates = 0;  // synthetic likelihood N
  std::vector<double> bandwidth;  // gaussian-kernel: diagonal of C, one entry per statistic
};

struct PriorSpec {
  enum class Kind { Uniform, Gaussian };
  Kind kind = Kind::Uniform;
  std::vector<double> mean;
  std::vector<double> sd;
};

struct BolfiPosteriorSpec {
  enum class Likelihood { None, ModelLu, Synthetic };
  Likelihood likelihood = Likelihood::None;
  double h = 0.0;  // 0: modelled threshold at the J-hat minimizer
  double threshold_quantile = 0.05;
  std::size_t iterations = 3;
  std::size_t samples = 25000;
};

struct BolfiSpec {
  std::size_t T = 50;
  std::size_t t0 = 10;
  AcquisitionRule rule = AcquisitionRule::Stochastic;
  double rel_tolerance = 0.01;
  std::size_t batch_size = 1;
  double epsilon_eta = 0.1;
  ResponseTransform response;
  MeanFunction::Kind mean = MeanFunction::Kind::Constant;
  std::size_t refit_every = 10;
  bool prior_modulation = false;
  BolfiPosteriorSpec posterior;
  std::size_t curve_points = 200;  // 1-D likelihood-curve export
};

struct McmcSpec {
  std::size_t iterations = 10000;
  std::vector<double> proposal_sd;
  std::vector<bool> log_scale;
  double burn_in_fraction = 0.25;
  std::vector<double> start;
};

struct AbcSpec {
  double h = 0.0;
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  std::uint64_t cap = 10000000;
};

struct PmcSpec {
  std::size_t generations = 3;
  std::size_t target_accepted = 1000;
  std::uint64_t simulation_cap = 10000000;
  std::vector<double> thresholds;
  double quantile = 0.1;
  std::size_t initial_simulations = 1000;
};

struct GridSpec {
  enum class Kernel { Uniform, Synthetic };
  std::size_t points = 50;
  std::size_t replicates = 300;
  Kernel kernel = Kernel::Uniform;
  double h = 0.0;
};

struct ExperimentConfig {
  std::string name;
  ModelSpec model;
  DiscrepancySpec discrepancy;
  PriorSpec prior;
  Method method = Method::Bolfi;
  BolfiSpec bolfi;
  McmcSpec mcmc;
  AbcSpec abc;
  PmcSpec pmc;
  GridSpec grid;
  std::uint64_t seed = 0;
  std::string output_dir;
  json echo;  // the validated input document

  Box bounds() const;
  std::vector<std::string> free_names() const;
  ParameterMap parameter_map() const;
  /// True values of the free parameters when the observation was generated.
  std::optional<std::vector<double>> truth() const;
};

ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

struct ComparisonConfig {
  std::string name;
  std::vector<std::filesystem::path> experiments;  // resolved against the file's directory
  std::string output_dir;
};

ComparisonConfig load_comparison(const std::filesystem::path& path);

/// Loads every member config; throws ConfigError unless all share the same
/// model section (parameters and observed data).
std::vector<ExperimentConfig> load_members(const ComparisonConfig& cc);

/// True when the file holds a comparison (an "experiments" list).
bool is_comparison_file(const std::filesystem::path& path);

}  // namespace bolfi::harness

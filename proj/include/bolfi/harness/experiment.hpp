#pragma once

// Runs one configured experiment (or a comparison of several) end to end and
// writes its outputs: CSV tables, bo_state.json, budget.json and the
// manifest. File layouts are described by the JSON files under schemas/.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bolfi/harness/config.hpp"
#include "bolfi/samplers.hpp"

namespace bolfi::harness {

struct RunOptions {
  /// Prefix for relative output directories.
  std::optional<std::filesystem::path> output_root;
  std::size_t workers = 1;
};

struct StageBudget {
  std::string stage;
  std::uint64_t simulations = 0;
  std::uint64_t datasets = 0;
  double wall_seconds = 0.0;
};

struct RunResult {
  std::string name;
  Method method = Method::Bolfi;
  std::filesystem::path dir;
  std::vector<std::string> names;
  std::optional<std::vector<double>> truth;
  std::optional<WeightedParticles> posterior;
  std::vector<StageBudget> stages;
  std::uint64_t simulations = 0;
  std::uint64_t datasets = 0;
  /// Spread of the acquired parameters (bolfi only).
  std::optional<double> nn_distance;
  std::optional<std::size_t> distinct_acquisitions;
  json manifest;
};

std::filesystem::path resolve_output_dir(const std::string& dir, const RunOptions& options);

/// Throws StageError on runtime failure; outputs written so far are kept.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options);

/// Runs every listed experiment in order and writes comparison.csv.
/// Returns the path of the table.
std::filesystem::path run_comparison(const ComparisonConfig& config, const RunOptions& options);

/// From a finished bolfi run: J-hat profiles along each axis and pairwise
/// slices through argmin J-hat, written under <run_dir>/plots.
void export_plots_data(const std::filesystem::path& run_dir, std::size_t points = 60);

/// Validates every CSV/JSON output in a run directory against the schemas.
/// Returns the list of problems (empty when everything conforms).
std::vector<std::string> check_outputs(const std::filesystem::path& run_dir,
                                       const std::filesystem::path& schema_dir);

/// FNV-1a over the file bytes, as recorded in the manifest.
std::string file_digest(const std::string& content);

}  // namespace bolfi::harness

#pragma once

// Output helpers: round-trippable number formatting, CSV tables, atomic file
// writes and JSON views of the core types.

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "bolfi/bo.hpp"
#include "bolfi/gp.hpp"
#include "bolfi/samplers.hpp"

namespace bolfi {

using json = nlohmann::ordered_json;

/// %.17g, so every double round-trips exactly.
std::string format_double(double x);

class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row(std::vector<std::string> fields);
  std::string str() const;
  std::size_t rows() const { return rows_.size(); }
  const std::vector<std::string>& header() const { return header_; }

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// Column names with a prefix, e.g. theta_log_r.
std::vector<std::string> prefixed(const std::string& prefix, const std::vector<std::string>& names);

json to_json(const GpHyperparams& hp);
GpHyperparams hyperparams_from_json(const json& j);

/// Evidence as ordered entries with the raw discrepancy alongside.
json evidence_json(const BoState& state);
json bo_state_json(const BoState& state, const json& config_echo);

CsvTable evidence_csv(const BoState& state, const std::vector<std::string>& names);
CsvTable acquisitions_csv(const BoState& state, const std::vector<std::string>& names);
/// Appends particle rows (generation, theta..., weight) to a table built by particles_csv_header.
CsvTable particles_csv_header(const std::vector<std::string>& names);
void append_particles(CsvTable& table, const WeightedParticles& particles, std::size_t generation);
CsvTable chain_csv(const McmcChain& chain, const std::vector<std::string>& names);
CsvTable summary_stats_csv(const std::vector<SummaryStats>& stats, const std::vector<std::string>& stat_names);

}  // namespace bolfi

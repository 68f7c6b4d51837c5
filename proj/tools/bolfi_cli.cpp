// Command-line front end. Exit codes: 0 ok, 1 runtime failure, 2 bad config.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "bolfi/harness/config.hpp"
#include "bolfi/harness/experiment.hpp"
#include "bolfi/simd.hpp"

namespace fs = std::filesystem;
using namespace bolfi;
using namespace bolfi::harness;

namespace {

constexpr int kRuntimeError = 1;
constexpr int kConfigError = 2;

RunOptions make_options(const std::string& root, std::size_t workers) {
  RunOptions o;
  o.workers = workers == 0 ? 1 : workers;
  if (!root.empty()) {
    o.output_root = root;
  } else if (const char* env = std::getenv("BOLFI_OUTPUT_ROOT"); env && *env) {
    o.output_root = env;
  }
  return o;
}

void print_summary(const RunResult& r) {
  std::cout << r.name << " (" << to_string(r.method) << "): " << r.simulations << " simulations";
  if (r.datasets != r.simulations) std::cout << ", " << r.datasets << " data sets";
  std::cout << " -> " << r.dir.string() << "\n";
  if (r.posterior) {
    const auto mean = r.posterior->mean();
    for (std::size_t j = 0; j < r.names.size(); ++j) {
      std::cout << "  E[" << r.names[j] << "] = " << mean[j] << "  95% CI [" << r.posterior->quantile(j, 0.025)
                << ", " << r.posterior->quantile(j, 0.975) << "]\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian optimization for likelihood-free inference"};
  app.require_subcommand(1);

  std::string config_path, run_dir, output_root, simd_backend;
  std::string schema_dir = BOLFI_SCHEMA_DIR;
  std::size_t workers = 1, points = 60;

  app.add_option("--simd", simd_backend, "Kernel backend: scalar, avx2 or neon (default: best available)");

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--workers", workers, "Maximum worker threads");
  run->add_option("--output-root", output_root, "Prefix for relative output directories (overrides BOLFI_OUTPUT_ROOT)");

  auto* compare = app.add_subcommand("compare", "Run a comparison of several experiments");
  compare->add_option("config", config_path, "Comparison config (JSON)")->required()->check(CLI::ExistingFile);
  compare->add_option("--workers", workers, "Maximum worker threads");
  compare->add_option("--output-root", output_root, "Prefix for relative output directories");

  auto* validate = app.add_subcommand("validate-config", "Check an experiment or comparison config without running it");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* plots = app.add_subcommand("export-plots-data", "Write J-hat profiles and slices for a bolfi run");
  plots->add_option("run_dir", run_dir, "Output directory of a bolfi run")->required()->check(CLI::ExistingDirectory);
  plots->add_option("--points", points, "Grid points per axis");

  auto* check = app.add_subcommand("check-outputs", "Validate a run directory against the output schemas");
  check->add_option("run_dir", run_dir, "Output directory of a run")->required()->check(CLI::ExistingDirectory);
  check->add_option("--schemas", schema_dir, "Schema directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (!simd_backend.empty()) {
      simd::Backend b;
      if (simd_backend == "scalar") {
        b = simd::Backend::Scalar;
      } else if (simd_backend == "avx2") {
        b = simd::Backend::Avx2;
      } else if (simd_backend == "neon") {
        b = simd::Backend::Neon;
      } else {
        throw ConfigError("unknown --simd backend '" + simd_backend + "'");
      }
      if (!simd::select(b)) throw ConfigError("--simd " + simd_backend + " is not available on this machine");
    }

    if (*validate) {
      if (is_comparison_file(config_path)) {
        const ComparisonConfig cc = load_comparison(config_path);
        const auto members = load_members(cc);
        std::cout << "ok: comparison " << cc.name << " (" << members.size() << " experiments)\n";
      } else {
        const ExperimentConfig cfg = load_config(config_path);
        std::cout << "ok: " << cfg.name << " (" << to_string(cfg.method) << ", " << cfg.free_names().size()
                  << " free parameters)\n";
      }
    } else if (*run) {
      const ExperimentConfig cfg = load_config(config_path);
      print_summary(run_experiment(cfg, make_options(output_root, workers)));
    } else if (*compare) {
      const ComparisonConfig cc = load_comparison(config_path);
      const fs::path table = run_comparison(cc, make_options(output_root, workers));
      std::cout << "comparison table: " << table.string() << "\n";
    } else if (*plots) {
      export_plots_data(run_dir, points);
      std::cout << "wrote " << (fs::path(run_dir) / "plots").string() << "\n";
    } else if (*check) {
      const auto problems = check_outputs(run_dir, schema_dir);
      for (const auto& p : problems) std::cerr << "schema: " << p << "\n";
      if (!problems.empty()) return kRuntimeError;
      std::cout << "ok: outputs conform\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const StageError& e) {
    std::cerr << "runtime error in stage '" << e.stage() << "': " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skillcal/bootstrap.hpp"
#include "skillcal/design_matrix.hpp"
#include "skillcal/estimators.hpp"

namespace skillcal {

/// Effective run settings. Parsed from a `key = value` file with an optional
/// `[collapse]` section; relative paths resolve against the file's directory.
struct RunConfig {
  std::filesystem::path ads;
  std::filesystem::path totals;
  std::filesystem::path output;
  std::string ads_text;     // paths as written, echoed in the manifest
  std::string totals_text;

  std::vector<std::string> estimators{"HTSRS", "ECGREG", "ECMC", "ECLASSO1", "ECLASSO2", "ECALASSO1"};
  std::vector<std::string> skills;  // empty = whole catalog
  std::vector<Wave> waves;          // empty = every wave in the ads file

  int replicates = 500;
  std::uint64_t seed = 1;
  int workers = 1;
  int folds = 10;
  double gamma = 1.0;
  std::size_t collapse_threshold = kDefaultCollapseThreshold;
  CollapseMap collapse;

  bool freeze_lambda = false;
  bool totals_noise = true;  // perturb totals inside bootstrap replicates
  bool dump_draws = false;

  static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Rejects unknown estimators, missing files and bad numbers before any work.
  void validate(bool bootstrap) const;
  std::vector<EstimatorSpec> estimator_specs() const;

  /// Canonical text of every value that affects results (not workers or output).
  std::string canonical_text() const;
  std::uint64_t hash() const;
};

std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Percent with one decimal, rounding half up: floor(1000 x + 0.5) / 10.
std::string format_percent(double fraction);

enum class RunMode { estimate, bootstrap };

struct PipelineResult {
  int exit_code = 0;
  std::vector<std::string> errors;
  std::vector<std::filesystem::path> files;
};

/// Runs the whole estimation (and optionally the bootstrap) and writes the
/// report files into config.output.
PipelineResult run_pipeline(const RunConfig& config, RunMode mode);

/// Renders the tables stored in `<dir>/results.json` as plain text.
std::string render_report(const std::filesystem::path& dir);

}  // namespace skillcal

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "skillcal/data_model.hpp"

namespace skillcal {

/// Synthetic population and online-sample design.
///
/// Cells are occupation x nace x province with shares
/// P(occupation) P(nace | occupation) P(province). Skills follow an additive
/// logit model over the three covariates; inclusion into the online sample
/// follows an additive selection logit whose intercept is solved per wave.
struct SyntheticDesign {
  std::vector<Wave> waves;
  std::map<Wave, std::size_t> population;
  std::map<Wave, std::size_t> sample_size;

  std::array<std::vector<std::string>, kCovariateCount> levels;
  std::vector<double> occupation_share;
  std::vector<std::vector<double>> nace_given_occupation;  // [occupation][nace]
  std::vector<double> province_share;

  SkillCatalog catalog = SkillCatalog::standard();
  std::vector<double> skill_intercept;                                        // [skill]
  std::vector<std::array<std::vector<double>, kCovariateCount>> skill_effect;  // [skill][covariate][level]
  std::array<std::vector<double>, kCovariateCount> selection_effect;          // [covariate][level]
  // Expected selected count relative to the target before truncation.
  double oversample = 1.05;

  std::map<Wave, std::array<double, kCovariateCount>> missing_rate;
  std::map<Wave, std::map<std::string, double>> nace_rel_se;  // percent
  std::map<Wave, double> grand_rel_se;                        // percent
  bool emit_cross = true;
  // Published totals = totals_scale x realised population counts.
  double totals_scale = 1.0;

  /// Empty design over the given levels with zero effects and uniform shares.
  static SyntheticDesign uniform(std::array<std::vector<std::string>, kCovariateCount> levels,
                                 std::vector<Wave> waves, std::size_t population, std::size_t sample_size);
  /// Plain-text `key = value` format; see data/fixture_design.txt.
  static SyntheticDesign parse(std::string_view text);
  static SyntheticDesign load(const std::filesystem::path& path);

  void validate() const;  // throws Config
  std::size_t cell_count() const;
};

struct GroundTruth {
  std::map<std::pair<std::string, Wave>, double> true_prevalence;  // (skill, wave)
};

struct SimulationOutput {
  AdSample sample;
  TotalsByWave totals;
  GroundTruth truth;
};

struct SimulateOptions {
  // Replace exact totals by one draw of the totals-noise model.
  bool noisy_totals = false;
};

/// Throws InfeasibleDesign when selection cannot reach a wave's sample size.
SimulationOutput generate(const SyntheticDesign& design, std::uint64_t seed, const SimulateOptions& options = {});

void save_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth load_truth(const std::filesystem::path& path);

}  // namespace skillcal

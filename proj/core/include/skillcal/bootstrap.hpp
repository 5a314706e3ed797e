#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "skillcal/estimators.hpp"

namespace skillcal {

// Non-positive perturbed totals are replaced by this floor.
inline constexpr double kTotalsFloor = 0.5;

struct BootstrapConfig {
  int replicates = 500;
  std::uint64_t seed = 1;
  std::vector<EstimatorSpec> estimators;
  std::vector<std::string> skills;
  std::vector<Wave> waves;
  int workers = 1;
  bool freeze_lambda = false;
  bool perturb_totals = true;
  double max_drop_fraction = 0.05;
  ModelSettings models;

  void validate() const;
};

struct BootstrapDistribution {
  std::vector<double> draws;  // one per retained replicate, in replicate order
  double mean = 0.0;
  double variance = 0.0;  // divisor B - 1
  double sd = 0.0;
  double cv_pct = 0.0;    // 100 * sd / mean
};

BootstrapDistribution summarize(std::vector<double> draws);

using DrawKey = std::tuple<std::string, EstimatorName, Wave>;  // (skill, estimator, wave)

struct BootstrapResult {
  std::map<DrawKey, BootstrapDistribution> distributions;
  std::map<std::pair<std::string, EstimatorName>, double> mean_auc;
  std::vector<int> replicates_kept;
  std::size_t dropped = 0;
  std::size_t truncated_totals = 0;
  std::vector<std::string> drop_reasons;
};

/// One draw of the published totals: NACE marginals ~ N(T, rel_se/100 * T),
/// cross rows scaled by draw/original, occupation marginals re-derived as
/// column sums, grand total as the sum of NACE marginals. Other marginals are
/// rescaled to the new grand total. Throws MissingRelSE.
TotalsTable perturb_totals(const TotalsTable& totals, std::mt19937_64& rng, std::size_t* truncated = nullptr);

/// n_wave draws with replacement from one wave's records.
AdSample resample_ads(const AdSample& sample, Wave wave, std::mt19937_64& rng);

/// Throws ReplicateFailure when more than max_drop_fraction of replicates fail.
BootstrapResult run_bootstrap(const BootstrapConfig& config, const AdSample& sample, const TotalsByWave& totals);

/// Frozen-lambda table taken from a base model cache.
std::map<std::pair<EstimatorName, std::string>, double> selected_lambdas(const ModelCache& cache);

void write_draws_csv(const std::filesystem::path& path, const BootstrapResult& result);

}  // namespace skillcal

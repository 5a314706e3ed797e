#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skillcal/calibration.hpp"
#include "skillcal/data_model.hpp"
#include "skillcal/design_matrix.hpp"
#include "skillcal/error.hpp"
#include "skillcal/glm.hpp"

namespace skillcal {

enum class EstimatorName { HTSRS, ECGREG, ECMC, ECLASSO1, ECLASSO2, ECALASSO1 };

inline constexpr std::array<EstimatorName, 6> kAllEstimators{EstimatorName::HTSRS,    EstimatorName::ECGREG,
                                                             EstimatorName::ECMC,     EstimatorName::ECLASSO1,
                                                             EstimatorName::ECLASSO2, EstimatorName::ECALASSO1};

std::string_view estimator_name(EstimatorName name) noexcept;
// Throws Config for unknown names.
EstimatorName parse_estimator(std::string_view name);

enum class ModelTag { none, logistic, lasso, adaptive_lasso };
std::string_view model_tag_name(ModelTag tag) noexcept;

struct EstimatorSpec {
  EstimatorName name = EstimatorName::HTSRS;
  std::vector<Covariate> covariates;
  ModelTag model_tag = ModelTag::none;
  bool pooled_model = true;

  static EstimatorSpec standard(EstimatorName name);
  bool has_model() const noexcept { return model_tag != ModelTag::none; }
  bool needs_cross_totals() const;
  void validate() const;  // throws Config
};

struct WeightDiagnostics {
  double min = 0.0;
  double max = 0.0;
  double sum = 0.0;
  std::size_t negative_count = 0;
};

WeightDiagnostics diagnose(const WeightVector& w);

struct PointEstimate {
  std::string skill;
  Wave wave = 0;
  EstimatorName estimator = EstimatorName::HTSRS;
  double value = 0.0;
  WeightDiagnostics weights;
  bool out_of_range = false;       // value outside [0, 1] (negative weights)
  bool degenerate_model = false;   // model calibration fell back to intercept-only
  bool separation_fallback = false;
};

// ---------------------------------------------------------------------------
// Pooled working models, fit once per (estimator, skill) and shared read-only.
// ---------------------------------------------------------------------------

struct ModelSettings {
  int folds = 10;
  int n_lambda = 100;
  double lambda_min_ratio = 1e-4;
  double gamma = 1.0;
  std::uint64_t seed = 1;
  // When set for a (estimator, skill) pair, cross-validation is skipped.
  std::map<std::pair<EstimatorName, std::string>, double> frozen_lambda;
};

// Penalty used when the ECMC maximum-likelihood fit separates.
inline constexpr double kSeparationRidge = 1e-8;

struct FittedModel {
  ModelFit fit;
  bool separation_fallback = false;
  double auc = 0.0;                 // in-sample; NaN for a single-class outcome
  Eigen::VectorXd group_means;      // per group of the pooled design
  std::optional<Error> failure;
};

class ModelCache {
public:
  ModelCache() = default;
  ModelCache(const AdSample& pooled, std::span<const EstimatorSpec> specs, std::span<const std::string> skills,
             const ModelSettings& settings);

  // Throws the recorded fitting error if the model failed.
  const FittedModel& model(EstimatorName name, const std::string& skill) const;
  bool contains(EstimatorName name, const std::string& skill) const;
  // Per-unit fitted means of the pooled sample, aligned with its records.
  double unit_mean(EstimatorName name, const std::string& skill, std::size_t unit) const;
  Eigen::VectorXd unit_means(EstimatorName name, const std::string& skill) const;

  std::vector<std::pair<EstimatorName, std::string>> keys() const;

private:
  struct Design {
    std::vector<Covariate> covariates;
    GroupedDesign grouped;
  };
  std::vector<Design> designs_;
  std::map<std::pair<EstimatorName, std::string>, std::pair<std::size_t, FittedModel>> models_;
};

/// Fold seed of one skill's cross-validation; depends only on (seed, skill).
std::uint64_t fold_seed(std::uint64_t seed, std::size_t skill_index);

/// Sum over totals cells of total(cell) * mu_hat(cell). Occupation-only or
/// NACE-only models use marginal totals; two-covariate models use the cross
/// table. Throws UncoveredCell or MissingCrossTotals.
double population_model_total(const ModelFit& fit, const TotalsTable& totals, std::span<const Covariate> covariates);
double population_model_total(const ModelFit& fit, const TotalsTable& totals);

/// Weighted (Hajek) mean of a 0/1 outcome.
double hajek_mean(const WeightVector& w, std::span<const std::uint8_t> y);

/// One estimate from scratch (fits the pooled model when needed).
PointEstimate estimate(const EstimatorSpec& spec, const AdSample& sample, const TotalsTable& totals,
                       const std::string& skill, Wave wave, const ModelSettings& settings = {});

struct EstimateFailure {
  std::string skill;
  Wave wave = 0;
  EstimatorName estimator = EstimatorName::HTSRS;
  ErrorCode code = ErrorCode::InvalidArgument;
  std::string message;
};

struct EstimateResults {
  std::vector<PointEstimate> estimates;  // ordered by skill, estimator, wave
  std::vector<EstimateFailure> failures;
};

/// All (skill, estimator, wave) combinations against a prebuilt cache.
EstimateResults estimate_all(std::span<const EstimatorSpec> specs, const AdSample& pooled, const TotalsByWave& totals,
                             std::span<const std::string> skills, std::span<const Wave> waves, const ModelCache& cache);

}  // namespace skillcal

#include "skillcal/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "skillcal/metrics.hpp"
#include "skillcal/random.hpp"

namespace skillcal {

std::string_view estimator_name(EstimatorName name) noexcept {
  switch (name) {
    case EstimatorName::HTSRS: return "HTSRS";
    case EstimatorName::ECGREG: return "ECGREG";
    case EstimatorName::ECMC: return "ECMC";
    case EstimatorName::ECLASSO1: return "ECLASSO1";
    case EstimatorName::ECLASSO2: return "ECLASSO2";
    case EstimatorName::ECALASSO1: return "ECALASSO1";
  }
  return "?";
}

EstimatorName parse_estimator(std::string_view name) {
  for (EstimatorName e : kAllEstimators) {
    if (estimator_name(e) == name) return e;
  }
  fail(ErrorCode::Config, "unknown estimator '" + std::string(name) + "'");
}

std::string_view model_tag_name(ModelTag tag) noexcept {
  switch (tag) {
    case ModelTag::none: return "none";
    case ModelTag::logistic: return "logistic";
    case ModelTag::lasso: return "lasso";
    case ModelTag::adaptive_lasso: return "adaptive_lasso";
  }
  return "?";
}

EstimatorSpec EstimatorSpec::standard(EstimatorName name) {
  EstimatorSpec s;
  s.name = name;
  switch (name) {
    case EstimatorName::HTSRS: break;
    case EstimatorName::ECGREG: s.covariates = {Covariate::occupation}; break;
    case EstimatorName::ECMC:
      s.covariates = {Covariate::occupation};
      s.model_tag = ModelTag::logistic;
      break;
    case EstimatorName::ECLASSO1:
      s.covariates = {Covariate::occupation};
      s.model_tag = ModelTag::lasso;
      break;
    case EstimatorName::ECLASSO2:
      s.covariates = {Covariate::occupation, Covariate::nace};
      s.model_tag = ModelTag::lasso;
      break;
    case EstimatorName::ECALASSO1:
      s.covariates = {Covariate::occupation};
      s.model_tag = ModelTag::adaptive_lasso;
      break;
  }
  return s;
}

bool EstimatorSpec::needs_cross_totals() const {
  const bool occ = std::find(covariates.begin(), covariates.end(), Covariate::occupation) != covariates.end();
  const bool nace = std::find(covariates.begin(), covariates.end(), Covariate::nace) != covariates.end();
  return occ && nace;
}

void EstimatorSpec::validate() const {
  const std::string label(estimator_name(name));
  if (name == EstimatorName::HTSRS && (!covariates.empty() || has_model())) {
    fail(ErrorCode::Config, "HTSRS takes no covariates or model");
  }
  if (name == EstimatorName::ECGREG && (covariates.empty() || has_model())) {
    fail(ErrorCode::Config, "ECGREG needs calibration covariates and no model");
  }
  if (name != EstimatorName::HTSRS && name != EstimatorName::ECGREG && (!has_model() || covariates.empty())) {
    fail(ErrorCode::Config, label + " needs a working model and covariates");
  }
  if (covariates.size() > 2 || (covariates.size() == 2 && !needs_cross_totals())) {
    fail(ErrorCode::Config, label + ": two-covariate models must use occupation and nace");
  }
}

WeightDiagnostics diagnose(const WeightVector& w) {
  return WeightDiagnostics{w.min(), w.max(), w.sum(), w.negative_count()};
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t skill_index) { return mix_seed(seed, skill_index); }

namespace {

std::vector<std::uint8_t> outcome(const AdSample& sample, std::size_t skill) {
  std::vector<std::uint8_t> y(sample.records.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = sample.records[i].skills[skill];
  return y;
}

FittedModel fit_one(const EstimatorSpec& spec, const GroupedDesign& design, std::span<const std::uint8_t> y,
                    std::size_t skill_index, const std::string& skill, const ModelSettings& settings) {
  FittedModel out;
  LassoOptions lasso;
  lasso.folds = settings.folds;
  lasso.n_lambda = settings.n_lambda;
  lasso.lambda_min_ratio = settings.lambda_min_ratio;
  lasso.seed = fold_seed(settings.seed, skill_index);
  auto frozen = settings.frozen_lambda.find({spec.name, skill});
  if (frozen != settings.frozen_lambda.end()) lasso.fixed_lambda = frozen->second;

  const BinomialProblem counts = aggregate(design, y);
  const Eigen::VectorXd negatives = counts.trials - counts.successes;
  if (counts.successes.sum() == 0.0 || negatives.sum() == 0.0) {
    // No finite fit exists; use the constant limit model.
    const double level = counts.successes.sum() > 0.0 ? 1.0 : 0.0;
    out.fit.intercept = level > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    out.fit.coefficients = Eigen::VectorXd::Zero(design.rows.cols());
    out.fit.alpha_weights = Eigen::VectorXd::Ones(design.rows.cols());
    out.fit.column_labels = design.column_labels;
    out.fit.covariates = design.covariates;
    out.fit.reference_levels = design.reference_levels;
    out.group_means = Eigen::VectorXd::Constant(counts.trials.size(), level);
    out.auc = std::numeric_limits<double>::quiet_NaN();
    return out;
  }

  switch (spec.model_tag) {
    case ModelTag::logistic:
      try {
        out.fit = fit_logistic_mle(design, y);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::SeparationDetected && e.code() != ErrorCode::RankDeficient) throw;
        out.fit = fit_logistic_ridge(design, y, kSeparationRidge);
        out.separation_fallback = true;
      }
      break;
    case ModelTag::lasso: out.fit = fit_lasso(design, y, lasso); break;
    case ModelTag::adaptive_lasso: out.fit = fit_adaptive_lasso(design, y, settings.gamma, lasso); break;
    case ModelTag::none: fail(ErrorCode::InvalidArgument, "estimator has no model");
  }
  const Eigen::VectorXd eta = group_linear_predictor(out.fit, design);
  out.group_means = eta.unaryExpr([](double e) { return inverse_logit(e); });
  out.auc = auc_grouped(std::span<const double>(out.group_means.data(), static_cast<std::size_t>(out.group_means.size())),
                        std::span<const double>(counts.successes.data(), static_cast<std::size_t>(counts.successes.size())),
                        std::span<const double>(negatives.data(), static_cast<std::size_t>(negatives.size())));
  return out;
}

}  // namespace

ModelCache::ModelCache(const AdSample& pooled, std::span<const EstimatorSpec> specs, std::span<const std::string> skills,
                       const ModelSettings& settings) {
  for (const auto& spec : specs) {
    if (!spec.has_model()) continue;
    std::size_t design_index = designs_.size();
    for (std::size_t d = 0; d < designs_.size(); ++d) {
      if (designs_[d].covariates == spec.covariates) design_index = d;
    }
    if (design_index == designs_.size()) {
      designs_.push_back(Design{spec.covariates, group_rows(encode(pooled, spec.covariates, true))});
    }
    const GroupedDesign& design = designs_[design_index].grouped;
    for (const auto& skill : skills) {
      const std::size_t k = pooled.catalog.index_of(skill);
      const auto y = outcome(pooled, k);
      FittedModel model;
      try {
        model = fit_one(spec, design, y, k, skill, settings);
      } catch (const Error& e) {
        model.failure = e;
      }
      models_[{spec.name, skill}] = {design_index, std::move(model)};
    }
  }
}

bool ModelCache::contains(EstimatorName name, const std::string& skill) const {
  return models_.count({name, skill}) > 0;
}

const FittedModel& ModelCache::model(EstimatorName name, const std::string& skill) const {
  auto it = models_.find({name, skill});
  if (it == models_.end()) {
    fail(ErrorCode::InvalidArgument, "no model cached for " + std::string(estimator_name(name)) + "/" + skill);
  }
  if (it->second.second.failure) throw *it->second.second.failure;
  return it->second.second;
}

double ModelCache::unit_mean(EstimatorName name, const std::string& skill, std::size_t unit) const {
  const FittedModel& m = model(name, skill);
  const auto& design = designs_[models_.at({name, skill}).first].grouped;
  return m.group_means(static_cast<Eigen::Index>(design.group_of_unit.at(unit)));
}

Eigen::VectorXd ModelCache::unit_means(EstimatorName name, const std::string& skill) const {
  const FittedModel& m = model(name, skill);
  const auto& groups = designs_[models_.at({name, skill}).first].grouped.group_of_unit;
  Eigen::VectorXd out(static_cast<Eigen::Index>(groups.size()));
  for (std::size_t i = 0; i < groups.size(); ++i) out(static_cast<Eigen::Index>(i)) = m.group_means(groups[i]);
  return out;
}

std::vector<std::pair<EstimatorName, std::string>> ModelCache::keys() const {
  std::vector<std::pair<EstimatorName, std::string>> out;
  for (const auto& [key, value] : models_) out.push_back(key);
  return out;
}

double population_model_total(const ModelFit& fit, const TotalsTable& totals, std::span<const Covariate> covariates) {
  std::vector<Covariate> want(covariates.begin(), covariates.end());
  std::vector<Covariate> have = fit.covariates;
  std::sort(want.begin(), want.end());
  std::sort(have.begin(), have.end());
  if (want != have) fail(ErrorCode::InvalidArgument, "covariates differ from the model's covariates");
  return population_model_total(fit, totals);
}

double population_model_total(const ModelFit& fit, const TotalsTable& totals) {
  double sum = 0.0;
  if (fit.covariates.empty()) return inverse_logit(fit.intercept) * totals.grand_total;
  if (fit.covariates.size() == 1) {
    const Covariate c = fit.covariates.front();
    if (!totals.has_covariate(c)) {
      fail(ErrorCode::MissingCellTotal, "wave " + std::to_string(totals.wave) + " has no " +
                                            std::string(covariate_name(c)) + " totals");
    }
    for (const auto& [key, total] : totals.marginal_totals) {
      if (key.first != c || !(total > 0.0)) continue;
      sum += total * predict_cell(fit, CellKey{key.second});
    }
    return sum;
  }
  if (fit.covariates.size() == 2) {
    if (!totals.has_cross()) {
      fail(ErrorCode::MissingCrossTotals, "wave " + std::to_string(totals.wave) + " has no nace x occupation totals");
    }
    const bool occ_first = fit.covariates[0] == Covariate::occupation;
    for (const auto& [key, total] : totals.cross_totals) {
      if (!(total > 0.0)) continue;
      const auto& [nace, occ] = key;
      sum += total * predict_cell(fit, occ_first ? CellKey{occ, nace} : CellKey{nace, occ});
    }
    return sum;
  }
  fail(ErrorCode::InvalidArgument, "models over more than two covariates are not supported");
}

double hajek_mean(const WeightVector& w, std::span<const std::uint8_t> y) {
  if (y.size() != w.size()) fail(ErrorCode::DimensionMismatch, "outcome length differs from weights");
  double num = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i]) num += w.values(static_cast<Eigen::Index>(i));
  }
  return num / w.sum();
}

EstimateResults estimate_all(std::span<const EstimatorSpec> specs, const AdSample& pooled, const TotalsByWave& totals,
                             std::span<const std::string> skills, std::span<const Wave> waves,
                             const ModelCache& cache) {
  struct WaveData {
    std::vector<std::size_t> rows;
    const TotalsTable* totals = nullptr;
    std::optional<WeightVector> pseudo;
    std::map<EstimatorName, WeightVector> greg;
    std::map<EstimatorName, Error> greg_error;
    std::optional<Error> setup_error;
  };
  std::vector<WaveData> data(waves.size());
  for (std::size_t t = 0; t < waves.size(); ++t) {
    WaveData& wd = data[t];
    try {
      wd.rows = pooled.rows_of(waves[t]);
      auto it = totals.find(waves[t]);
      if (it == totals.end()) fail(ErrorCode::MissingGrandTotal, "no totals for wave " + std::to_string(waves[t]));
      wd.totals = &it->second;
      if (wd.rows.empty()) fail(ErrorCode::InvalidArgument, "wave " + std::to_string(waves[t]) + " has no records");
      wd.pseudo = pseudo_weights(wd.rows.size(), wd.totals->grand_total);
    } catch (const Error& e) {
      wd.setup_error = e;
      continue;
    }
    for (const auto& spec : specs) {
      if (spec.has_model() || spec.covariates.empty()) continue;
      try {
        const DesignMatrix x = encode_rows(pooled, wd.rows, spec.covariates, false);
        wd.greg.emplace(spec.name, calibrate_chi2(*wd.pseudo, x, totals_vector(*wd.totals, x)));
      } catch (const Error& e) {
        wd.greg_error.emplace(spec.name, e);
      }
    }
  }

  EstimateResults out;
  for (const auto& skill : skills) {
    const std::size_t k = pooled.catalog.index_of(skill);
    for (const auto& spec : specs) {
      for (std::size_t t = 0; t < waves.size(); ++t) {
        const WaveData& wd = data[t];
        PointEstimate pe;
        pe.skill = skill;
        pe.wave = waves[t];
        pe.estimator = spec.name;
        try {
          if (wd.setup_error) throw *wd.setup_error;
          std::vector<std::uint8_t> y(wd.rows.size());
          for (std::size_t i = 0; i < y.size(); ++i) y[i] = pooled.records[wd.rows[i]].skills[k];

          WeightVector w;
          if (!spec.has_model() && spec.covariates.empty()) {
            w = *wd.pseudo;
          } else if (!spec.has_model()) {
            auto err = wd.greg_error.find(spec.name);
            if (err != wd.greg_error.end()) throw err->second;
            w = wd.greg.at(spec.name);
          } else {
            const FittedModel& m = cache.model(spec.name, skill);
            const Eigen::VectorXd all = cache.unit_means(spec.name, skill);
            Eigen::VectorXd mu(static_cast<Eigen::Index>(wd.rows.size()));
            for (std::size_t i = 0; i < wd.rows.size(); ++i) {
              mu(static_cast<Eigen::Index>(i)) = all(static_cast<Eigen::Index>(wd.rows[i]));
            }
            const double t_mu = population_model_total(m.fit, *wd.totals);
            w = calibrate_model_assisted(*wd.pseudo, mu, wd.totals->grand_total, t_mu);
            w.outcome_tag = skill;
            pe.degenerate_model = w.degenerate_model;
            pe.separation_fallback = m.separation_fallback;
          }
          pe.value = hajek_mean(w, y);
          pe.weights = diagnose(w);
          pe.out_of_range = pe.value < 0.0 || pe.value > 1.0;
          out.estimates.push_back(std::move(pe));
        } catch (const Error& e) {
          out.failures.push_back(EstimateFailure{skill, waves[t], spec.name, e.code(), e.detail()});
        }
      }
    }
  }
  return out;
}

PointEstimate estimate(const EstimatorSpec& spec, const AdSample& sample, const TotalsTable& totals,
                       const std::string& skill, Wave wave, const ModelSettings& settings) {
  spec.validate();
  const std::vector<EstimatorSpec> specs{spec};
  const std::vector<std::string> skills{skill};
  const std::vector<Wave> waves{wave};
  const ModelCache cache(sample, specs, skills, settings);
  TotalsByWave by_wave;
  by_wave.emplace(wave, totals);
  EstimateResults r = estimate_all(specs, sample, by_wave, skills, waves, cache);
  if (!r.failures.empty()) fail(r.failures.front().code, r.failures.front().message);
  return r.estimates.front();
}

}  // namespace skillcal

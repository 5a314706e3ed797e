#include "skillcal/bootstrap.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

#include "skillcal/csv.hpp"
#include "skillcal/error.hpp"
#include "skillcal/random.hpp"

namespace skillcal {

void BootstrapConfig::validate() const {
  if (replicates < 2) fail(ErrorCode::Config, "bootstrap needs at least 2 replicates");
  if (workers < 1) fail(ErrorCode::Config, "workers must be at least 1");
  if (!(max_drop_fraction >= 0.0 && max_drop_fraction <= 1.0)) fail(ErrorCode::Config, "bad drop fraction");
  if (estimators.empty() || skills.empty() || waves.empty()) {
    fail(ErrorCode::Config, "bootstrap needs estimators, skills and waves");
  }
  for (const auto& spec : estimators) spec.validate();
}

BootstrapDistribution summarize(std::vector<double> draws) {
  BootstrapDistribution d;
  d.draws = std::move(draws);
  const auto b = static_cast<double>(d.draws.size());
  if (d.draws.empty()) return d;
  double sum = 0.0;
  for (double x : d.draws) sum += x;
  d.mean = sum / b;
  if (d.draws.size() > 1) {
    double ss = 0.0;
    for (double x : d.draws) ss += (x - d.mean) * (x - d.mean);
    d.variance = ss / (b - 1.0);
  }
  d.sd = std::sqrt(d.variance);
  if (d.mean != 0.0) {
    d.cv_pct = 100.0 * d.sd / std::abs(d.mean);
  } else {
    d.cv_pct = d.sd == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return d;
}

TotalsTable perturb_totals(const TotalsTable& totals, std::mt19937_64& rng, std::size_t* truncated) {
  TotalsTable out = totals;
  std::map<std::string, double> ratio;  // nace code -> draw / original
  double old_nace_sum = 0.0;
  double new_nace_sum = 0.0;
  for (auto& [key, value] : out.marginal_totals) {
    if (key.first != Covariate::nace) continue;
    auto se = totals.rel_se.find(key);
    if (se == totals.rel_se.end()) {
      fail(ErrorCode::MissingRelSE, "wave " + std::to_string(totals.wave) + ": no relative SE for nace " + key.second);
    }
    const double original = value;
    double draw = original + se->second / 100.0 * original * standard_normal(rng);
    if (!(draw > 0.0)) {
      draw = kTotalsFloor;
      if (truncated) ++*truncated;
    }
    value = draw;
    ratio[key.second] = draw / original;
    old_nace_sum += original;
    new_nace_sum += draw;
  }
  if (ratio.empty()) fail(ErrorCode::MissingRelSE, "wave " + std::to_string(totals.wave) + " has no nace totals");

  std::map<std::string, double> old_col, new_col;
  for (auto& [key, value] : out.cross_totals) {
    auto r = ratio.find(key.first);
    if (r == ratio.end()) {
      fail(ErrorCode::InconsistentMargins, "cross row for nace " + key.first + " has no marginal");
    }
    old_col[key.second] += value;
    value *= r->second;
    new_col[key.second] += value;
  }

  // Scaling by the ratio keeps inputs bit-identical when every draw equals its mean.
  const double grand_ratio = new_nace_sum / old_nace_sum;
  out.grand_total = totals.grand_total * grand_ratio;
  for (auto& [key, value] : out.marginal_totals) {
    if (key.first == Covariate::nace) continue;
    if (key.first == Covariate::occupation && out.has_cross()) {
      auto it = old_col.find(key.second);
      if (it != old_col.end() && it->second > 0.0) {
        value *= new_col[key.second] / it->second;
        continue;
      }
    }
    value *= grand_ratio;
  }
  return out;
}

AdSample resample_ads(const AdSample& sample, Wave wave, std::mt19937_64& rng) {
  const std::vector<std::size_t> rows = sample.rows_of(wave);
  if (rows.empty()) fail(ErrorCode::InvalidArgument, "wave " + std::to_string(wave) + " has no records");
  std::vector<std::size_t> picked(rows.size());
  for (auto& p : picked) p = rows[uniform_below(rng, rows.size())];
  return sample.subset(picked);
}

std::map<std::pair<EstimatorName, std::string>, double> selected_lambdas(const ModelCache& cache) {
  std::map<std::pair<EstimatorName, std::string>, double> out;
  for (const auto& key : cache.keys()) {
    if (key.first == EstimatorName::ECMC) continue;
    try {
      out[key] = cache.model(key.first, key.second).fit.lambda;
    } catch (const Error&) {
    }
  }
  return out;
}

namespace {

struct ReplicateOutput {
  std::vector<PointEstimate> estimates;
  std::map<std::pair<std::string, EstimatorName>, double> auc;
  std::size_t truncated = 0;
  std::string failure;
  bool ok = false;
};

ReplicateOutput run_replicate(const BootstrapConfig& config, const AdSample& sample, const TotalsByWave& totals,
                              const ModelSettings& settings, int replicate) {
  ReplicateOutput out;
  try {
    std::mt19937_64 rng = make_stream(config.seed, static_cast<std::uint64_t>(replicate));
    TotalsByWave perturbed;
    for (Wave w : config.waves) {
      auto it = totals.find(w);
      if (it == totals.end()) fail(ErrorCode::MissingGrandTotal, "no totals for wave " + std::to_string(w));
      perturbed.emplace(w, config.perturb_totals ? perturb_totals(it->second, rng, &out.truncated) : it->second);
    }
    AdSample pooled;
    pooled.dictionaries = sample.dictionaries;
    pooled.catalog = sample.catalog;
    for (Wave w : config.waves) {
      AdSample part = resample_ads(sample, w, rng);
      pooled.records.insert(pooled.records.end(), std::make_move_iterator(part.records.begin()),
                            std::make_move_iterator(part.records.end()));
    }
    ModelSettings s = settings;
    s.seed = mix_seed(config.models.seed, static_cast<std::uint64_t>(replicate) + 1);
    const ModelCache cache(pooled, config.estimators, config.skills, s);
    EstimateResults r = estimate_all(config.estimators, pooled, perturbed, config.skills, config.waves, cache);
    if (!r.failures.empty()) {
      const auto& f = r.failures.front();
      out.failure = std::string(estimator_name(f.estimator)) + "/" + f.skill + "/" + std::to_string(f.wave) + ": " +
                    std::string(error_code_name(f.code)) + ": " + f.message;
      return out;
    }
    for (const auto& [name, skill] : cache.keys()) out.auc[{skill, name}] = cache.model(name, skill).auc;
    out.estimates = std::move(r.estimates);
    out.ok = true;
  } catch (const std::exception& e) {
    out.failure = e.what();
  }
  return out;
}

}  // namespace

BootstrapResult run_bootstrap(const BootstrapConfig& config, const AdSample& sample, const TotalsByWave& totals) {
  config.validate();
  ModelSettings settings = config.models;
  if (config.freeze_lambda) {
    const ModelCache base(sample, config.estimators, config.skills, config.models);
    settings.frozen_lambda = selected_lambdas(base);
  }

  const auto b = static_cast<std::size_t>(config.replicates);
  std::vector<ReplicateOutput> outputs(b);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t r = next++; r < b; r = next++) {
      outputs[r] = run_replicate(config, sample, totals, settings, static_cast<int>(r));
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), b);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  BootstrapResult result;
  std::map<DrawKey, std::vector<double>> draws;
  std::map<std::pair<std::string, EstimatorName>, double> auc_sum;
  for (std::size_t r = 0; r < b; ++r) {
    ReplicateOutput& o = outputs[r];
    result.truncated_totals += o.truncated;
    if (!o.ok) {
      ++result.dropped;
      result.drop_reasons.push_back("replicate " + std::to_string(r) + ": " + o.failure);
      continue;
    }
    result.replicates_kept.push_back(static_cast<int>(r));
    for (const auto& pe : o.estimates) draws[{pe.skill, pe.estimator, pe.wave}].push_back(pe.value);
    for (const auto& [key, value] : o.auc) auc_sum[key] += value;
  }
  if (static_cast<double>(result.dropped) > config.max_drop_fraction * static_cast<double>(b) ||
      result.replicates_kept.size() < 2) {
    fail(ErrorCode::ReplicateFailure, std::to_string(result.dropped) + " of " + std::to_string(b) +
                                          " replicates failed" +
                                          (result.drop_reasons.empty() ? "" : "; first: " + result.drop_reasons.front()));
  }
  for (auto& [key, values] : draws) result.distributions[key] = summarize(std::move(values));
  const auto kept = static_cast<double>(result.replicates_kept.size());
  for (const auto& [key, sum] : auc_sum) result.mean_auc[key] = sum / kept;
  return result;
}

void write_draws_csv(const std::filesystem::path& path, const BootstrapResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "replicate,wave,skill,estimator,value\n";
  // Replicate-major order, matching the replicate loop.
  for (std::size_t i = 0; i < result.replicates_kept.size(); ++i) {
    for (const auto& [key, dist] : result.distributions) {
      const auto& [skill, name, wave] = key;
      out << result.replicates_kept[i] << ',' << wave << ',' << csv::escape(skill) << ',' << estimator_name(name) << ','
          << csv::format_double(dist.draws[i]) << '\n';
    }
  }
}

}  // namespace skillcal

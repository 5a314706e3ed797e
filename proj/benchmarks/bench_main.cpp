#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>
#include <vector>

#include "skillcal/bootstrap.hpp"
#include "skillcal/calibration.hpp"
#include "skillcal/data_model.hpp"
#include "skillcal/estimators.hpp"
#include "skillcal/glm.hpp"
#include "skillcal/metrics.hpp"

namespace {

using namespace skillcal;

const std::filesystem::path kFixture = SKILLCAL_SOURCE_DIR "/data/fixture";

const AdSample& fixture() {
  static const AdSample sample = impute_gower_1nn(load_ads(kFixture / "ads.csv", SkillCatalog::standard()));
  return sample;
}

const TotalsByWave& fixture_totals() {
  static const TotalsByWave totals = load_totals(kFixture / "totals.csv");
  return totals;
}

void BM_CalibrateChi2(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Eigen::Index p = 10;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, p);
  WeightVector d;
  d.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.values(i) = u(rng);
    x(i, i < p ? i : std::uniform_int_distribution<Eigen::Index>(0, p - 1)(rng)) = 1.0;
  }
  Eigen::VectorXd t = x.transpose() * d.values;
  for (Eigen::Index j = 0; j < p; ++j) t(j) *= std::uniform_real_distribution<double>(0.8, 1.2)(rng);
  for (auto _ : state) benchmark::DoNotOptimize(calibrate_chi2(d, x, t));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CalibrateChi2)->RangeMultiplier(10)->Range(200, 200000)->Complexity();

void BM_LassoPath(benchmark::State& state) {
  const AdSample& s = fixture();
  const std::vector<Covariate> covs{Covariate::occupation};
  const GroupedDesign g = group_rows(encode(s, covs, true));
  const std::size_t k = s.catalog.index_of("Computer");
  std::vector<std::uint8_t> y(s.records.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = s.records[i].skills[k];
  LassoOptions options;
  options.folds = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_lasso(g, y, options));
}
BENCHMARK(BM_LassoPath)->Arg(10)->Unit(benchmark::kMillisecond);

// One replicate: resample one wave, perturb its totals, refit the models and
// estimate every estimator for a single skill.
void BM_BootstrapReplicate(benchmark::State& state) {
  const AdSample& s = fixture();
  const Wave wave = 2011;
  const std::vector<std::string> skills{"Computer"};
  std::vector<EstimatorSpec> specs;
  for (auto e : kAllEstimators) specs.push_back(EstimatorSpec::standard(e));
  const std::vector<Wave> waves{wave};
  std::mt19937_64 rng(11);
  for (auto _ : state) {
    const AdSample boot = resample_ads(s, wave, rng);
    TotalsByWave totals;
    totals[wave] = perturb_totals(fixture_totals().at(wave), rng);
    const ModelCache cache(boot, specs, skills, ModelSettings{});
    benchmark::DoNotOptimize(estimate_all(specs, boot, totals, skills, waves, cache));
  }
}
BENCHMARK(BM_BootstrapReplicate)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::vector<std::uint8_t> y(n);
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<std::uint8_t>(i % 3 == 0);
    score[i] = std::uniform_real_distribution<double>(0, 1)(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(y, score));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Auc)->RangeMultiplier(10)->Range(1000, 1000000)->Complexity(benchmark::oNLogN);

}  // namespace

BENCHMARK_MAIN();

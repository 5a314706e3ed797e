#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "skillcal/data_model.hpp"
#include "skillcal/error.hpp"
#include "skillcal/simulator.hpp"
#include "temp_dir.hpp"

using namespace skillcal;
using testing_support::TempDir;

namespace {

std::string header() {
  std::string h = "wave,occupation,nace,province";
  for (const auto& n : SkillCatalog::standard().names) h += "," + n;
  return h + "\n";
}

std::string row(const std::string& lead, const std::string& skill_value = "0") {
  std::string r = lead;
  for (std::size_t k = 0; k < 11; ++k) r += "," + (k == 0 ? skill_value : std::string("1"));
  return r + "\n";
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

TotalsTable small_totals() {
  TotalsTable t;
  t.wave = 2011;
  t.grand_total = 100.0;
  t.marginal_totals[{Covariate::occupation, "11"}] = 40.0;
  t.marginal_totals[{Covariate::occupation, "12"}] = 60.0;
  return t;
}

}  // namespace

TEST_CASE("skill catalog") {
  const SkillCatalog c = SkillCatalog::standard();
  CHECK(c.size() == 11);
  CHECK(c.index_of("Technical") == 10);
  CHECK_FALSE(c.find("Juggling").has_value());
  CHECK(code_of([] { SkillCatalog{{"a", "a"}}.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("load_ads parses a small file") {
  TempDir dir;
  const auto p = dir.write("ads.csv", header() + row("2011,11,C,02") + row("2011,12,,04", "1") + row("2013,11,G,02"));
  const AdSample s = load_ads(p, SkillCatalog::standard());
  REQUIRE(s.records.size() == 3);
  CHECK(s.count(2011) == 2);
  CHECK(s.records[1].category(Covariate::nace) == kMissing);
  CHECK(s.records[1].skills[0] == 1);
  CHECK(s.dictionary(Covariate::occupation).codes() == std::vector<std::string>{"11", "12"});
  CHECK_FALSE(s.complete());
}

TEST_CASE("load_ads rejects a non-binary skill") {
  TempDir dir;
  const auto p = dir.write("ads.csv", header() + row("2011,11,C,02", "2"));
  CHECK(code_of([&] { load_ads(p, SkillCatalog::standard()); }) == ErrorCode::BadSkillValue);
}

TEST_CASE("load_ads contract errors") {
  TempDir dir;
  const auto missing = dir.write("a.csv", "wave,occupation,nace\n2011,11,C\n");
  CHECK(code_of([&] { load_ads(missing, SkillCatalog::standard()); }) == ErrorCode::MissingColumn);
  const auto empty = dir.write("b.csv", header());
  CHECK(code_of([&] { load_ads(empty, SkillCatalog::standard()); }) == ErrorCode::EmptyFile);

  LoadAdsOptions frozen;
  frozen.dictionaries = std::array<CategoryDictionary, 3>{CategoryDictionary({"11"}), CategoryDictionary({"C"}),
                                                          CategoryDictionary({"02"})};
  const auto unseen = dir.write("c.csv", header() + row("2011,12,C,02"));
  CHECK(code_of([&] { load_ads(unseen, SkillCatalog::standard(), frozen); }) == ErrorCode::UnknownCategory);

  LoadAdsOptions waves;
  waves.allowed_waves = {2013};
  const auto other = dir.write("d.csv", header() + row("2011,11,C,02"));
  CHECK_THROWS_AS(load_ads(other, SkillCatalog::standard(), waves), Error);
}

TEST_CASE("bundled fixture loads 38,100 ads over three waves") {
  const AdSample s = load_ads(SKILLCAL_SOURCE_DIR "/data/fixture/ads.csv", SkillCatalog::standard());
  CHECK(s.records.size() == 38100);
  CHECK(s.waves() == std::vector<Wave>{2011, 2013, 2014});
  CHECK(s.count(2011) + s.count(2013) + s.count(2014) == 38100);
  CHECK(s.dictionary(Covariate::occupation).size() == 34);
}

TEST_CASE("totals file for 2011 carries the published grand total") {
  const TotalsTable t = load_totals(SKILLCAL_SOURCE_DIR "/data/fixture/totals.csv", 2011);
  CHECK(t.grand_total == 71775.0);
  REQUIRE(t.grand_rel_se.has_value());
  CHECK(*t.grand_rel_se == doctest::Approx(3.4));
  CHECK(t.rel_se.at({Covariate::nace, "C"}) == doctest::Approx(5.5));
  CHECK(t.has_cross());
}

TEST_CASE("totals invariants") {
  TotalsTable t = small_totals();
  CHECK_NOTHROW(t.validate());

  TotalsTable short_margin = t;
  short_margin.marginal_totals[{Covariate::occupation, "12"}] = 50.0;  // sums to 90
  CHECK(code_of([&] { short_margin.validate(); }) == ErrorCode::InconsistentMargins);

  TotalsTable negative = t;
  negative.marginal_totals[{Covariate::occupation, "11"}] = -1.0;
  CHECK(code_of([&] { negative.validate(); }) == ErrorCode::NegativeTotal);

  TotalsTable no_grand = t;
  no_grand.grand_total = 0.0;
  CHECK(code_of([&] { no_grand.validate(); }) == ErrorCode::MissingGrandTotal);

  TotalsTable cross = t;
  cross.marginal_totals[{Covariate::nace, "C"}] = 100.0;
  cross.cross_totals[{"C", "11"}] = 40.0;
  cross.cross_totals[{"C", "12"}] = 60.0;
  CHECK_NOTHROW(cross.validate());
  cross.cross_totals[{"C", "12"}] = 61.0;
  CHECK(code_of([&] { cross.validate(); }) == ErrorCode::InconsistentMargins);
}

TEST_CASE("simulated cross table round-trips through the totals file") {
  SyntheticDesign d = SyntheticDesign::uniform({{{"11", "12", "21"}, {"C", "F"}, {"02", "04"}}}, {2011, 2013}, 5000, 400);
  const SimulationOutput sim = generate(d, 3);
  TempDir dir;
  save_totals(dir.path() / "totals.csv", sim.totals);
  const TotalsByWave back = load_totals(dir.path() / "totals.csv");
  CHECK(back == sim.totals);
  for (const auto& [w, t] : back) {
    CHECK_NOTHROW(t.validate());
    for (const auto& nace : t.categories(Covariate::nace)) {
      double row = 0.0;
      for (const auto& [key, v] : t.cross_totals) {
        if (key.first == nace) row += v;
      }
      CHECK(row == doctest::Approx(*t.marginal(Covariate::nace, nace)).epsilon(1e-6));
    }
  }
}

TEST_CASE("ads round-trip on random samples") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    AdSample s = oracle::random_sample(rng, 5 + trial * 3, {3, 4, 2}, 3);
    s.records[1].covariates[1] = kMissing;
    TempDir dir;
    save_ads(dir.path() / "ads.csv", s);
    const AdSample back = load_ads(dir.path() / "ads.csv", s.catalog);
    CHECK(back.records == s.records);
  }
}

TEST_CASE("ordered codes sort numerically then lexicographically") {
  CHECK(ordered_codes({"9", "10", "2"}) == std::vector<std::string>{"2", "9", "10"});
  CHECK(ordered_codes({"G", "C", "F"}) == std::vector<std::string>{"C", "F", "G"});
}

TEST_CASE("Gower imputation takes the zero-distance donor") {
  AdSample s;
  s.catalog.names = {"a", "b"};
  s.dictionaries = {CategoryDictionary({"1", "2"}), CategoryDictionary({"A", "B"}), CategoryDictionary({"x", "y"})};
  s.records = {
      {2011, {0, 0, 0}, {1, 0}},
      {2011, {1, 1, 1}, {0, 1}},
      {2011, {1, kMissing, 1}, {0, 1}},
  };
  ImputationSummary summary;
  const AdSample out = impute_gower_1nn(s, summary);
  CHECK(out.records[2].category(Covariate::nace) == 1);
  CHECK(out.complete());
  CHECK(summary.records_imputed == 1);
  CHECK(summary.cells_imputed[1] == 1);
}

TEST_CASE("Gower imputation breaks ties by the lower row index") {
  AdSample s;
  s.catalog.names = {"a"};
  s.dictionaries = {CategoryDictionary({"1", "2"}), CategoryDictionary({"A", "B"}), CategoryDictionary({"x", "y"})};
  s.records = {
      {2011, {0, 1, 1}, {1}},  // differs in occupation
      {2011, {1, 0, 0}, {1}},  // differs in province
      {2011, {1, kMissing, 1}, {1}},
  };
  const AdSample out = impute_gower_1nn(s);
  CHECK(out.records[2].category(Covariate::nace) == 1);
}

TEST_CASE("Gower imputation needs a complete donor in the wave") {
  AdSample s;
  s.catalog.names = {"a"};
  s.dictionaries = {CategoryDictionary({"1"}), CategoryDictionary({"A"}), CategoryDictionary({"x"})};
  s.records = {{2011, {0, 0, 0}, {1}}, {2013, {0, kMissing, 0}, {1}}};
  CHECK(code_of([&] { impute_gower_1nn(s); }) == ErrorCode::NoDonorAvailable);
}

TEST_CASE("Gower imputation keeps the category distribution under random masking") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> occ(0, 2);
  AdSample s;
  s.catalog.names = {"a", "b"};
  s.dictionaries = {CategoryDictionary({"1", "2", "3"}), CategoryDictionary({"A", "B", "C"}), CategoryDictionary({"x"})};
  for (int i = 0; i < 100; ++i) {
    const int o = occ(rng);
    // nace follows occupation most of the time, skills follow nace
    const int n = std::bernoulli_distribution(0.8)(rng) ? o : occ(rng);
    s.records.push_back({2011, {o, n, 0}, {static_cast<std::uint8_t>(n == 0), static_cast<std::uint8_t>(n == 1)}});
  }
  std::array<double, 3> before{};
  for (const auto& r : s.records) before[static_cast<std::size_t>(r.covariates[1])] += 1.0;
  AdSample masked = s;
  std::bernoulli_distribution mask(0.1);
  for (auto& r : masked.records) {
    if (mask(rng)) r.covariates[1] = kMissing;
  }
  const AdSample out = impute_gower_1nn(masked);
  std::array<double, 3> after{};
  for (const auto& r : out.records) after[static_cast<std::size_t>(r.covariates[1])] += 1.0;
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(after[j] - before[j]) / 100.0 <= 0.10);
}

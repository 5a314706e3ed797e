#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "skillcal/error.hpp"
#include "skillcal/metrics.hpp"

using namespace skillcal;

namespace {

struct AucCase {
  std::vector<std::uint8_t> y;
  std::vector<double> s;
};

// Random labels with both classes present; scores on a coarse grid so ties occur.
AucCase random_auc_case(std::mt19937_64& rng, bool ties) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
  AucCase c;
  c.y.resize(n);
  for (auto& v : c.y) v = std::bernoulli_distribution(0.4)(rng);
  c.y[0] = 1;
  c.y[1] = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) c.s.push_back(ties ? std::floor(u(rng) * 6.0) : u(rng));
  return c;
}

}  // namespace

TEST_CASE("AUC edge cases") {
  const std::vector<std::uint8_t> y{1, 0, 1, 0, 0};
  const std::vector<double> perfect{1, 0, 1, 0, 0};
  CHECK(auc(y, perfect) == 1.0);
  const std::vector<double> flat(5, 0.3);
  CHECK(auc(y, flat) == 0.5);
  const std::vector<std::uint8_t> ones{1, 1};
  const std::vector<double> two{0.1, 0.2};
  CHECK_THROWS_WITH_AS(auc(ones, two), doctest::Contains("OneClassOnly"), Error);
}

TEST_CASE("AUC of an eight-point instance equals pair enumeration") {
  const std::vector<std::uint8_t> y{1, 0, 1, 1, 0, 0, 1, 0};
  const std::vector<double> s{0.9, 0.3, 0.3, 0.7, 0.8, 0.1, 0.5, 0.5};
  CHECK(auc(y, s) == oracle::auc_pairs(y, s));
  CHECK(auc(y, s) == 11.0 / 16.0);
}

TEST_CASE("AUC properties") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const AucCase tied = random_auc_case(rng, true);
    CHECK(auc(tied.y, tied.s) == oracle::auc_pairs(tied.y, tied.s));

    const AucCase c = random_auc_case(rng, false);
    std::vector<double> neg(c.s.size()), mono(c.s.size());
    std::transform(c.s.begin(), c.s.end(), neg.begin(), [](double v) { return -v; });
    std::transform(c.s.begin(), c.s.end(), mono.begin(), [](double v) { return std::exp(3.0 * v) - 7.0; });
    CHECK(auc(c.y, c.s) + auc(c.y, neg) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(auc(c.y, mono) == auc(c.y, c.s));

    // grouped form over the distinct scores
    std::map<double, std::pair<double, double>> groups;
    for (std::size_t i = 0; i < tied.y.size(); ++i) (tied.y[i] ? groups[tied.s[i]].first : groups[tied.s[i]].second) += 1;
    std::vector<double> gs, gp, gn;
    for (const auto& [score, counts] : groups) {
      gs.push_back(score);
      gp.push_back(counts.first);
      gn.push_back(counts.second);
    }
    CHECK(auc_grouped(gs, gp, gn) == doctest::Approx(auc(tied.y, tied.s)).epsilon(1e-14));
  }
}

TEST_CASE("Cramer's V limits") {
  CHECK(cramers_v({{25, 25}, {25, 25}}) == 0.0);
  CHECK(cramers_v({{30, 0}, {0, 70}}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cramers_v({{10, 20, 30}, {20, 40, 60}}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cramers_v({{5, 0, 0}, {0, 7, 0}, {0, 0, 9}}) == 1.0);
  CHECK(cramers_v({{3, 11, 0}, {0, 0, 13}}) == 1.0);  // each column in one row
  CHECK(cramers_v({{3, 11, 1}, {0, 0, 13}}) < 1.0);
  CHECK_THROWS_WITH_AS(cramers_v({{1, 2}}), doctest::Contains("DegenerateTable"), Error);
}

TEST_CASE("Cramer's V properties") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 20 + static_cast<std::size_t>(trial);
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(i % 3);
      b[i] = std::uniform_int_distribution<int>(0, 3)(rng);
    }
    b[0] = 0;
    b[1] = 1;
    const double v = cramers_v(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(cramers_v(b, a) == doctest::Approx(v).epsilon(1e-14));
    std::vector<int> relabel(b);
    for (auto& x : relabel) x = 10 - 3 * x;
    CHECK(cramers_v(a, relabel) == doctest::Approx(v).epsilon(1e-14));

    std::vector<std::vector<double>> table(3, std::vector<double>(4, 0.0));
    for (std::size_t i = 0; i < n; ++i) table[static_cast<std::size_t>(a[i])][static_cast<std::size_t>(b[i])] += 1;
    // empty columns are dropped before the degrees of freedom are counted
    std::vector<std::vector<double>> used(3);
    for (std::size_t c = 0; c < 4; ++c) {
      double col = 0;
      for (std::size_t r = 0; r < 3; ++r) col += table[r][c];
      if (col > 0) {
        for (std::size_t r = 0; r < 3; ++r) used[r].push_back(table[r][c]);
      }
    }
    CHECK(v == doctest::Approx(oracle::cramers_v_definition(used)).epsilon(1e-12));
  }
}

TEST_CASE("fixture Computer x occupation association") {
  const AdSample s = load_ads(SKILLCAL_SOURCE_DIR "/data/fixture/ads.csv", SkillCatalog::standard());
  const std::size_t k = s.catalog.index_of("Computer");
  std::vector<int> occ, skill;
  for (const auto& r : s.records) {
    if (r.category(Covariate::occupation) == kMissing) continue;
    occ.push_back(r.category(Covariate::occupation));
    skill.push_back(r.skills[k]);
  }
  CHECK(std::abs(cramers_v(occ, skill) - 0.45) <= 0.02);
}

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace skillcal {

using Wave = int;  // survey year label, e.g. 2011

enum class Covariate : int { occupation = 0, nace = 1, province = 2 };

inline constexpr std::array<Covariate, 3> kAllCovariates{Covariate::occupation, Covariate::nace,
                                                         Covariate::province};
inline constexpr std::size_t kCovariateCount = kAllCovariates.size();

std::string_view covariate_name(Covariate covariate) noexcept;
// Throws UnknownCovariate.
Covariate parse_covariate(std::string_view name);

inline std::size_t covariate_slot(Covariate c) noexcept { return static_cast<std::size_t>(c); }

using CategoryIndex = std::int32_t;
inline constexpr CategoryIndex kMissing = -1;

/// Ordered admissible codes of one categorical covariate. Frozen once built:
/// later inputs referencing a code that is not listed are rejected.
class CategoryDictionary {
public:
  CategoryDictionary() = default;
  explicit CategoryDictionary(std::vector<std::string> codes);

  const std::vector<std::string>& codes() const noexcept { return codes_; }
  std::size_t size() const noexcept { return codes_.size(); }
  const std::string& code(CategoryIndex index) const;
  std::optional<CategoryIndex> find(std::string_view code) const;
  bool contains(std::string_view code) const { return find(code).has_value(); }

  friend bool operator==(const CategoryDictionary&, const CategoryDictionary&) = default;

private:
  std::vector<std::string> codes_;
};

/// The K skill labels; record skill vectors are indexed in this order.
struct SkillCatalog {
  std::vector<std::string> names;

  static SkillCatalog standard();  // the eleven skill groups of the job-offer survey

  std::size_t size() const noexcept { return names.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws InvalidArgument
  void validate() const;

  friend bool operator==(const SkillCatalog&, const SkillCatalog&) = default;
};

struct AdRecord {
  Wave wave = 0;
  std::array<CategoryIndex, kCovariateCount> covariates{kMissing, kMissing, kMissing};
  std::vector<std::uint8_t> skills;

  CategoryIndex category(Covariate c) const noexcept { return covariates[covariate_slot(c)]; }
  bool complete() const noexcept;

  friend bool operator==(const AdRecord&, const AdRecord&) = default;
};

/// The non-probability sample: coded job ads over one or more waves.
struct AdSample {
  std::vector<AdRecord> records;
  std::array<CategoryDictionary, kCovariateCount> dictionaries;
  SkillCatalog catalog;

  const CategoryDictionary& dictionary(Covariate c) const { return dictionaries[covariate_slot(c)]; }

  std::vector<Wave> waves() const;  // ascending, distinct
  std::size_t count(Wave wave) const;
  std::vector<std::size_t> rows_of(Wave wave) const;
  AdSample subset(std::span<const std::size_t> rows) const;
  AdSample wave_subset(Wave wave) const { return subset(rows_of(wave)); }
  bool complete() const;

  // Checks skill vector lengths, 0/1 values and dictionary bounds.
  void validate() const;

  friend bool operator==(const AdSample&, const AdSample&) = default;
};

struct LoadAdsOptions {
  // When set, categories are looked up in these frozen dictionaries and
  // unseen codes are rejected with UnknownCategory.
  std::optional<std::array<CategoryDictionary, kCovariateCount>> dictionaries;
  // When non-empty, rows from other waves are rejected.
  std::vector<Wave> allowed_waves;
};

/// Numeric codes sort by value (length, then digits); others lexicographically.
std::vector<std::string> ordered_codes(const std::set<std::string>& codes);

/// Rebuilds dictionaries from the codes records actually use, in the order
/// load_ads would produce.
AdSample canonical_dictionaries(const AdSample& sample);

/// Reads ads from CSV (header: wave, occupation, nace, province, one column per skill).
AdSample load_ads(const std::filesystem::path& path, const SkillCatalog& catalog,
                  const LoadAdsOptions& options = {});
void save_ads(const std::filesystem::path& path, const AdSample& sample);

/// Published (estimated) vacancy totals for one wave.
struct TotalsTable {
  using MarginalKey = std::pair<Covariate, std::string>;
  using CrossKey = std::pair<std::string, std::string>;  // (nace, occupation)

  Wave wave = 0;
  double grand_total = 0.0;
  std::optional<double> grand_rel_se;  // percent
  std::map<MarginalKey, double> marginal_totals;
  std::map<CrossKey, double> cross_totals;
  std::map<MarginalKey, double> rel_se;  // percent

  std::optional<double> marginal(Covariate c, std::string_view category) const;
  std::vector<std::string> categories(Covariate c) const;
  bool has_covariate(Covariate c) const;
  bool has_cross() const noexcept { return !cross_totals.empty(); }

  // Throws NegativeTotal, InconsistentMargins or MissingGrandTotal.
  void validate() const;

  friend bool operator==(const TotalsTable&, const TotalsTable&) = default;
};

inline constexpr double kMarginTolerance = 1e-6;
inline constexpr std::string_view kCrossCovariateName = "nace_occupation";

using TotalsByWave = std::map<Wave, TotalsTable>;

/// Long-format totals file: wave, covariate, category_a, category_b, total, rel_se_pct.
TotalsByWave load_totals(const std::filesystem::path& path);
TotalsTable load_totals(const std::filesystem::path& path, Wave wave);
void save_totals(const std::filesystem::path& path, const TotalsByWave& tables);

/// Fills missing covariates from the single nearest complete record of the
/// same wave under Gower distance (uniform weights, categorical columns,
/// observed covariates plus all skills). Ties go to the lowest row index.
AdSample impute_gower_1nn(const AdSample& sample);

struct ImputationSummary {
  std::size_t records_imputed = 0;
  std::array<std::size_t, kCovariateCount> cells_imputed{};
};
AdSample impute_gower_1nn(const AdSample& sample, ImputationSummary& summary);

}  // namespace skillcal

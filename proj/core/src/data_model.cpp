#include "skillcal/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "skillcal/csv.hpp"
#include "skillcal/error.hpp"

namespace skillcal {

std::string_view covariate_name(Covariate covariate) noexcept {
  switch (covariate) {
    case Covariate::occupation: return "occupation";
    case Covariate::nace: return "nace";
    case Covariate::province: return "province";
  }
  return "?";
}

Covariate parse_covariate(std::string_view name) {
  for (Covariate c : kAllCovariates) {
    if (covariate_name(c) == name) return c;
  }
  fail(ErrorCode::UnknownCovariate, "unknown covariate '" + std::string(name) + "'");
}

CategoryDictionary::CategoryDictionary(std::vector<std::string> codes) : codes_(std::move(codes)) {
  std::set<std::string> seen;
  for (const auto& c : codes_) {
    if (c.empty()) fail(ErrorCode::InvalidArgument, "empty category code in dictionary");
    if (!seen.insert(c).second) fail(ErrorCode::InvalidArgument, "duplicate category code '" + c + "'");
  }
}

const std::string& CategoryDictionary::code(CategoryIndex index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= codes_.size()) {
    fail(ErrorCode::InvalidArgument, "category index out of range");
  }
  return codes_[static_cast<std::size_t>(index)];
}

std::optional<CategoryIndex> CategoryDictionary::find(std::string_view code) const {
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (codes_[i] == code) return static_cast<CategoryIndex>(i);
  }
  return std::nullopt;
}

SkillCatalog SkillCatalog::standard() {
  return SkillCatalog{{"Artistic", "Availability", "Cognitive", "Computer", "Interpersonal", "Managerial",
                       "Mathematical", "Office", "Physical", "Self-organization", "Technical"}};
}

std::optional<std::size_t> SkillCatalog::find(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t SkillCatalog::index_of(std::string_view name) const {
  auto idx = find(name);
  if (!idx) fail(ErrorCode::InvalidArgument, "unknown skill '" + std::string(name) + "'");
  return *idx;
}

void SkillCatalog::validate() const {
  if (names.empty()) fail(ErrorCode::InvalidArgument, "skill catalog is empty");
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) fail(ErrorCode::InvalidArgument, "empty skill name");
    if (!seen.insert(n).second) fail(ErrorCode::InvalidArgument, "duplicate skill '" + n + "'");
  }
}

bool AdRecord::complete() const noexcept {
  return std::none_of(covariates.begin(), covariates.end(), [](CategoryIndex c) { return c == kMissing; });
}

std::vector<Wave> AdSample::waves() const {
  std::set<Wave> set;
  for (const auto& r : records) set.insert(r.wave);
  return {set.begin(), set.end()};
}

std::size_t AdSample::count(Wave wave) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [wave](const AdRecord& r) { return r.wave == wave; }));
}

std::vector<std::size_t> AdSample::rows_of(Wave wave) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].wave == wave) rows.push_back(i);
  }
  return rows;
}

AdSample AdSample::subset(std::span<const std::size_t> rows) const {
  AdSample out;
  out.dictionaries = dictionaries;
  out.catalog = catalog;
  out.records.reserve(rows.size());
  for (std::size_t r : rows) out.records.push_back(records.at(r));
  return out;
}

bool AdSample::complete() const {
  return std::all_of(records.begin(), records.end(), [](const AdRecord& r) { return r.complete(); });
}

void AdSample::validate() const {
  catalog.validate();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.skills.size() != catalog.size()) {
      fail(ErrorCode::DimensionMismatch, "record " + std::to_string(i) + " has wrong skill count");
    }
    for (auto s : r.skills) {
      if (s > 1) fail(ErrorCode::BadSkillValue, "record " + std::to_string(i) + " has non-binary skill");
    }
    for (Covariate c : kAllCovariates) {
      const CategoryIndex idx = r.category(c);
      if (idx != kMissing && (idx < 0 || static_cast<std::size_t>(idx) >= dictionary(c).size())) {
        fail(ErrorCode::UnknownCategory, "record " + std::to_string(i) + " references an unknown category");
      }
    }
  }
}

namespace {

bool all_numeric(const std::set<std::string>& codes) {
  return std::all_of(codes.begin(), codes.end(), [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  });
}

}  // namespace

std::vector<std::string> ordered_codes(const std::set<std::string>& codes) {
  std::vector<std::string> out(codes.begin(), codes.end());
  if (all_numeric(codes)) {
    std::stable_sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      if (a.size() != b.size()) return a.size() < b.size();
      return a < b;
    });
  }
  return out;
}

AdSample canonical_dictionaries(const AdSample& sample) {
  AdSample out = sample;
  for (Covariate c : kAllCovariates) {
    const auto slot = covariate_slot(c);
    std::set<std::string> used;
    for (const auto& r : sample.records) {
      if (r.covariates[slot] != kMissing) used.insert(sample.dictionaries[slot].code(r.covariates[slot]));
    }
    CategoryDictionary dict(ordered_codes(used));
    for (auto& r : out.records) {
      auto& v = r.covariates[slot];
      if (v != kMissing) v = *dict.find(sample.dictionaries[slot].code(v));
    }
    out.dictionaries[slot] = std::move(dict);
  }
  return out;
}

namespace {

Wave parse_wave(const std::string& text, std::size_t line) {
  Wave w = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), w);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::Parse, "line " + std::to_string(line) + ": bad wave '" + text + "'");
  }
  return w;
}

double parse_number(const std::string& text, std::size_t line, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    fail(ErrorCode::Parse, "line " + std::to_string(line) + ": bad " + std::string(what) + " '" + text + "'");
  }
  return v;
}

}  // namespace

AdSample load_ads(const std::filesystem::path& path, const SkillCatalog& catalog, const LoadAdsOptions& options) {
  catalog.validate();
  const csv::Table table = csv::read_file(path);
  if (table.header.empty()) fail(ErrorCode::EmptyFile, path.string() + " has no header");

  const long wave_col = table.column("wave");
  std::array<long, kCovariateCount> cov_cols{};
  for (Covariate c : kAllCovariates) cov_cols[covariate_slot(c)] = table.column(covariate_name(c));
  std::vector<long> skill_cols;
  for (const auto& name : catalog.names) skill_cols.push_back(table.column(name));

  if (wave_col < 0) fail(ErrorCode::MissingColumn, "column 'wave' missing in " + path.string());
  for (Covariate c : kAllCovariates) {
    if (cov_cols[covariate_slot(c)] < 0) {
      fail(ErrorCode::MissingColumn, "column '" + std::string(covariate_name(c)) + "' missing in " + path.string());
    }
  }
  for (std::size_t k = 0; k < skill_cols.size(); ++k) {
    if (skill_cols[k] < 0) fail(ErrorCode::MissingColumn, "skill column '" + catalog.names[k] + "' missing");
  }
  if (table.rows.empty()) fail(ErrorCode::EmptyFile, path.string() + " has no data rows");

  const std::set<Wave> allowed(options.allowed_waves.begin(), options.allowed_waves.end());

  // First pass: collect codes for dictionaries (unless frozen ones were supplied).
  std::array<std::set<std::string>, kCovariateCount> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size()) {
      fail(ErrorCode::Parse, "line " + std::to_string(table.line_numbers[r]) + ": expected " +
                                 std::to_string(table.header.size()) + " fields");
    }
    for (Covariate c : kAllCovariates) {
      const auto& v = row[static_cast<std::size_t>(cov_cols[covariate_slot(c)])];
      if (!v.empty()) seen[covariate_slot(c)].insert(v);
    }
  }

  AdSample sample;
  sample.catalog = catalog;
  if (options.dictionaries) {
    sample.dictionaries = *options.dictionaries;
  } else {
    for (Covariate c : kAllCovariates) {
      sample.dictionaries[covariate_slot(c)] = CategoryDictionary(ordered_codes(seen[covariate_slot(c)]));
    }
  }

  sample.records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    AdRecord rec;
    rec.wave = parse_wave(row[static_cast<std::size_t>(wave_col)], line);
    if (!allowed.empty() && !allowed.count(rec.wave)) {
      fail(ErrorCode::InvalidArgument, "line " + std::to_string(line) + ": wave " + std::to_string(rec.wave) +
                                           " is not in the configured wave set");
    }
    for (Covariate c : kAllCovariates) {
      const auto& v = row[static_cast<std::size_t>(cov_cols[covariate_slot(c)])];
      if (v.empty()) continue;
      auto idx = sample.dictionary(c).find(v);
      if (!idx) {
        fail(ErrorCode::UnknownCategory, "line " + std::to_string(line) + ": unseen " +
                                             std::string(covariate_name(c)) + " category '" + v + "'");
      }
      rec.covariates[covariate_slot(c)] = *idx;
    }
    rec.skills.resize(catalog.size());
    for (std::size_t k = 0; k < skill_cols.size(); ++k) {
      const auto& v = row[static_cast<std::size_t>(skill_cols[k])];
      if (v == "0") {
        rec.skills[k] = 0;
      } else if (v == "1") {
        rec.skills[k] = 1;
      } else {
        fail(ErrorCode::BadSkillValue, "line " + std::to_string(line) + ": skill '" + catalog.names[k] +
                                           "' has value '" + v + "' (expected 0 or 1)");
      }
    }
    sample.records.push_back(std::move(rec));
  }
  return sample;
}

void save_ads(const std::filesystem::path& path, const AdSample& sample) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "wave";
  for (Covariate c : kAllCovariates) out << ',' << covariate_name(c);
  for (const auto& name : sample.catalog.names) out << ',' << csv::escape(name);
  out << '\n';
  for (const auto& r : sample.records) {
    out << r.wave;
    for (Covariate c : kAllCovariates) {
      out << ',';
      if (r.category(c) != kMissing) out << csv::escape(sample.dictionary(c).code(r.category(c)));
    }
    for (auto s : r.skills) out << ',' << static_cast<int>(s);
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

std::optional<double> TotalsTable::marginal(Covariate c, std::string_view category) const {
  auto it = marginal_totals.find({c, std::string(category)});
  if (it == marginal_totals.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> TotalsTable::categories(Covariate c) const {
  std::vector<std::string> out;
  for (const auto& [key, value] : marginal_totals) {
    if (key.first == c) out.push_back(key.second);
  }
  return out;
}

bool TotalsTable::has_covariate(Covariate c) const {
  return std::any_of(marginal_totals.begin(), marginal_totals.end(),
                     [c](const auto& kv) { return kv.first.first == c; });
}

namespace {

bool within_relative(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace

void TotalsTable::validate() const {
  const std::string where = "wave " + std::to_string(wave);
  if (!(grand_total > 0.0) || !std::isfinite(grand_total)) {
    fail(ErrorCode::MissingGrandTotal, where + ": grand total missing or non-positive");
  }
  for (const auto& [key, value] : marginal_totals) {
    if (!(value > 0.0)) {
      fail(ErrorCode::NegativeTotal, where + ": total for " + std::string(covariate_name(key.first)) + " '" +
                                         key.second + "' is not positive");
    }
  }
  for (const auto& [key, value] : cross_totals) {
    if (value < 0.0) {
      fail(ErrorCode::NegativeTotal, where + ": cross total (" + key.first + ", " + key.second + ") is negative");
    }
  }
  for (const auto& [key, value] : rel_se) {
    if (value < 0.0) fail(ErrorCode::NegativeTotal, where + ": negative relative standard error");
  }
  for (Covariate c : kAllCovariates) {
    if (!has_covariate(c)) continue;
    double sum = 0.0;
    for (const auto& [key, value] : marginal_totals) {
      if (key.first == c) sum += value;
    }
    if (!within_relative(sum, grand_total, kMarginTolerance)) {
      fail(ErrorCode::InconsistentMargins, where + ": " + std::string(covariate_name(c)) + " totals sum to " +
                                               csv::format_double(sum) + ", grand total is " +
                                               csv::format_double(grand_total));
    }
  }
  if (!cross_totals.empty()) {
    std::map<std::string, double> row_sums;
    for (const auto& [key, value] : cross_totals) row_sums[key.first] += value;
    for (const auto& [nace, sum] : row_sums) {
      auto m = marginal(Covariate::nace, nace);
      if (!m) fail(ErrorCode::InconsistentMargins, where + ": cross row '" + nace + "' has no nace marginal");
      if (!within_relative(sum, *m, kMarginTolerance)) {
        fail(ErrorCode::InconsistentMargins, where + ": cross row '" + nace + "' sums to " +
                                                 csv::format_double(sum) + ", marginal is " + csv::format_double(*m));
      }
    }
    for (const auto& [key, value] : marginal_totals) {
      if (key.first == Covariate::nace && !row_sums.count(key.second)) {
        fail(ErrorCode::InconsistentMargins, where + ": nace '" + key.second + "' has no cross-table row");
      }
    }
  }
}

TotalsByWave load_totals(const std::filesystem::path& path) {
  const csv::Table table = csv::read_file(path);
  if (table.header.empty()) fail(ErrorCode::EmptyFile, path.string() + " has no header");
  const long wave_col = table.column("wave");
  const long cov_col = table.column("covariate");
  const long a_col = table.column("category_a");
  const long b_col = table.column("category_b");
  const long total_col = table.column("total");
  const long se_col = table.column("rel_se_pct");
  for (auto [col, name] : {std::pair{wave_col, "wave"}, std::pair{cov_col, "covariate"},
                           std::pair{a_col, "category_a"}, std::pair{b_col, "category_b"},
                           std::pair{total_col, "total"}}) {
    if (col < 0) fail(ErrorCode::MissingColumn, std::string("column '") + name + "' missing in " + path.string());
  }
  if (table.rows.empty()) fail(ErrorCode::EmptyFile, path.string() + " has no data rows");

  TotalsByWave out;
  std::map<Wave, bool> has_grand;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    if (row.size() != table.header.size()) {
      fail(ErrorCode::Parse, "line " + std::to_string(line) + ": expected " + std::to_string(table.header.size()) +
                                 " fields");
    }
    const Wave wave = parse_wave(row[static_cast<std::size_t>(wave_col)], line);
    auto& t = out[wave];
    t.wave = wave;
    const std::string& cov = row[static_cast<std::size_t>(cov_col)];
    const std::string& a = row[static_cast<std::size_t>(a_col)];
    const std::string& b = row[static_cast<std::size_t>(b_col)];
    const double total = parse_number(row[static_cast<std::size_t>(total_col)], line, "total");
    std::optional<double> se;
    if (se_col >= 0 && !row[static_cast<std::size_t>(se_col)].empty()) {
      se = parse_number(row[static_cast<std::size_t>(se_col)], line, "rel_se_pct");
    }
    if (total < 0.0) fail(ErrorCode::NegativeTotal, "line " + std::to_string(line) + ": negative total");
    if (cov == "total") {
      t.grand_total = total;
      t.grand_rel_se = se;
      has_grand[wave] = true;
    } else if (cov == kCrossCovariateName) {
      if (a.empty() || b.empty()) fail(ErrorCode::Parse, "line " + std::to_string(line) + ": cross cell needs both categories");
      t.cross_totals[{a, b}] = total;
    } else {
      const Covariate c = parse_covariate(cov);
      if (a.empty()) fail(ErrorCode::Parse, "line " + std::to_string(line) + ": empty category");
      t.marginal_totals[{c, a}] = total;
      if (se) t.rel_se[{c, a}] = *se;
    }
  }
  for (auto& [wave, t] : out) {
    if (!has_grand[wave]) fail(ErrorCode::MissingGrandTotal, "wave " + std::to_string(wave) + " has no total row");
    t.validate();
  }
  return out;
}

TotalsTable load_totals(const std::filesystem::path& path, Wave wave) {
  auto all = load_totals(path);
  auto it = all.find(wave);
  if (it == all.end()) fail(ErrorCode::MissingGrandTotal, "wave " + std::to_string(wave) + " not in " + path.string());
  return it->second;
}

void save_totals(const std::filesystem::path& path, const TotalsByWave& tables) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "wave,covariate,category_a,category_b,total,rel_se_pct\n";
  for (const auto& [wave, t] : tables) {
    out << wave << ",total,,," << csv::format_double(t.grand_total) << ','
        << (t.grand_rel_se ? csv::format_double(*t.grand_rel_se) : std::string()) << '\n';
    for (const auto& [key, value] : t.marginal_totals) {
      out << wave << ',' << covariate_name(key.first) << ',' << csv::escape(key.second) << ",,"
          << csv::format_double(value) << ',';
      auto se = t.rel_se.find(key);
      if (se != t.rel_se.end()) out << csv::format_double(se->second);
      out << '\n';
    }
    for (const auto& [key, value] : t.cross_totals) {
      out << wave << ',' << kCrossCovariateName << ',' << csv::escape(key.first) << ',' << csv::escape(key.second)
          << ',' << csv::format_double(value) << ",\n";
    }
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace skillcal

#include "skillcal/design_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "skillcal/error.hpp"

namespace skillcal {

std::string ColumnLabel::to_string() const {
  if (intercept) return "(intercept)";
  return std::string(covariate_name(covariate)) + "=" + category;
}

std::vector<Covariate> parse_covariates(std::span<const std::string> names) {
  std::vector<Covariate> out;
  for (const auto& n : names) out.push_back(parse_covariate(n));
  return out;
}

DesignMatrix encode(const AdSample& sample, std::span<const Covariate> covariates, bool intercept) {
  std::vector<std::size_t> rows(sample.records.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return encode_rows(sample, rows, covariates, intercept);
}

DesignMatrix encode_rows(const AdSample& sample, std::span<const std::size_t> rows,
                         std::span<const Covariate> covariates, bool intercept) {
  if (covariates.empty() && !intercept) fail(ErrorCode::InvalidArgument, "nothing to encode");
  std::set<Covariate> distinct(covariates.begin(), covariates.end());
  if (distinct.size() != covariates.size()) fail(ErrorCode::InvalidArgument, "covariate listed twice");

  DesignMatrix m;
  m.has_intercept = intercept;
  m.covariates.assign(covariates.begin(), covariates.end());
  if (intercept) m.column_labels.push_back(ColumnLabel::make_intercept());

  std::vector<Eigen::Index> block_start;  // first column of each covariate block
  for (Covariate c : covariates) {
    const auto& dict = sample.dictionary(c);
    if (dict.size() == 0) fail(ErrorCode::InvalidArgument, "empty dictionary for " + std::string(covariate_name(c)));
    block_start.push_back(static_cast<Eigen::Index>(m.column_labels.size()));
    m.cell_radix.push_back(dict.size());
    const std::size_t first = intercept ? 1 : 0;
    if (intercept) m.reference_levels[c] = dict.codes().front();
    for (std::size_t j = first; j < dict.size(); ++j) {
      m.column_labels.push_back(ColumnLabel{false, c, dict.codes()[j]});
    }
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  m.values = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(m.column_labels.size()));
  m.row_cells.resize(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const AdRecord& rec = sample.records.at(rows[static_cast<std::size_t>(i)]);
    if (intercept) m.values(i, 0) = 1.0;
    std::uint64_t cell = 0;
    for (std::size_t b = 0; b < covariates.size(); ++b) {
      const CategoryIndex idx = rec.category(covariates[b]);
      if (idx == kMissing) {
        fail(ErrorCode::InvalidArgument, "record " + std::to_string(rows[static_cast<std::size_t>(i)]) + " has missing " +
                                             std::string(covariate_name(covariates[b])) + "; impute first");
      }
      cell = cell * m.cell_radix[b] + static_cast<std::uint64_t>(idx);
      if (intercept) {
        if (idx > 0) m.values(i, block_start[b] + idx - 1) = 1.0;
      } else {
        m.values(i, block_start[b] + idx) = 1.0;
      }
    }
    m.row_cells[static_cast<std::size_t>(i)] = cell;
  }
  return m;
}

TotalsVector totals_vector(const TotalsTable& totals, const DesignMatrix& matrix) {
  TotalsVector out;
  out.labels = matrix.column_labels;
  out.values.resize(static_cast<Eigen::Index>(matrix.column_labels.size()));
  for (std::size_t j = 0; j < matrix.column_labels.size(); ++j) {
    const auto& label = matrix.column_labels[j];
    if (label.intercept) {
      out.values(static_cast<Eigen::Index>(j)) = totals.grand_total;
      continue;
    }
    auto t = totals.marginal(label.covariate, label.category);
    if (!t) {
      fail(ErrorCode::MissingCellTotal, "wave " + std::to_string(totals.wave) + " has no total for " + label.to_string());
    }
    out.values(static_cast<Eigen::Index>(j)) = *t;
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Follows from -> to chains to the final target; rejects cycles.
std::map<std::pair<Covariate, std::string>, std::string> resolve(const CollapseMap& map) {
  std::map<std::pair<Covariate, std::string>, std::string> direct;
  for (const auto& r : map.rules) direct[{r.covariate, r.from}] = r.to;
  std::map<std::pair<Covariate, std::string>, std::string> out;
  for (const auto& [key, to] : direct) {
    std::string target = to;
    std::size_t steps = 0;
    while (true) {
      auto it = direct.find({key.first, target});
      if (it == direct.end()) break;
      target = it->second;
      if (++steps > direct.size()) fail(ErrorCode::Config, "collapse map contains a cycle at '" + key.second + "'");
    }
    out[key] = target;
  }
  return out;
}

}  // namespace

CollapseMap CollapseMap::parse(std::string_view text) {
  CollapseMap map;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto colon = t.find(':');
    const auto arrow = t.find("->");
    if (colon == std::string::npos || arrow == std::string::npos || arrow < colon) {
      fail(ErrorCode::Config, "collapse line " + std::to_string(line_no) + ": expected 'covariate: from -> to'");
    }
    CollapseRule rule;
    rule.covariate = parse_covariate(trim(t.substr(0, colon)));
    rule.from = trim(t.substr(colon + 1, arrow - colon - 1));
    rule.to = trim(t.substr(arrow + 2));
    if (rule.from.empty() || rule.to.empty() || rule.from == rule.to) {
      fail(ErrorCode::Config, "collapse line " + std::to_string(line_no) + ": bad categories");
    }
    map.rules.push_back(std::move(rule));
  }
  resolve(map);
  return map;
}

std::string CollapseMap::to_string() const {
  std::string out;
  for (const auto& r : rules) {
    out += std::string(covariate_name(r.covariate)) + ": " + r.from + " -> " + r.to + "\n";
  }
  return out;
}

CollapseMap active_rules(const CollapseMap& map, const AdSample& sample, std::size_t threshold) {
  CollapseMap out;
  const auto waves = sample.waves();
  for (const auto& rule : map.rules) {
    auto idx = sample.dictionary(rule.covariate).find(rule.from);
    if (!idx) continue;
    std::size_t min_count = std::numeric_limits<std::size_t>::max();
    for (Wave w : waves) {
      std::size_t count = 0;
      for (const auto& r : sample.records) {
        if (r.wave == w && r.category(rule.covariate) == *idx) ++count;
      }
      min_count = std::min(min_count, count);
    }
    if (waves.empty() || min_count < threshold) out.rules.push_back(rule);
  }
  return out;
}

AdSample apply_collapse(const AdSample& sample, const CollapseMap& map) {
  if (map.empty()) return sample;
  const auto targets = resolve(map);
  AdSample out = sample;
  for (Covariate c : kAllCovariates) {
    const auto& dict = sample.dictionary(c);
    std::vector<std::string> kept;
    for (const auto& code : dict.codes()) {
      if (!targets.count({c, code})) kept.push_back(code);
    }
    if (kept.size() == dict.size()) continue;
    CategoryDictionary new_dict(kept);
    std::vector<CategoryIndex> remap(dict.size(), kMissing);
    for (std::size_t i = 0; i < dict.size(); ++i) {
      const std::string& code = dict.codes()[i];
      auto t = targets.find({c, code});
      const std::string& final_code = t == targets.end() ? code : t->second;
      auto idx = new_dict.find(final_code);
      if (!idx) {
        fail(ErrorCode::UnknownCategory, "collapse target '" + final_code + "' is not a " +
                                             std::string(covariate_name(c)) + " category");
      }
      remap[i] = *idx;
    }
    for (auto& rec : out.records) {
      auto& v = rec.covariates[covariate_slot(c)];
      if (v != kMissing) v = remap[static_cast<std::size_t>(v)];
    }
    out.dictionaries[covariate_slot(c)] = std::move(new_dict);
  }
  return out;
}

TotalsTable apply_collapse(const TotalsTable& totals, const CollapseMap& map) {
  if (map.empty()) return totals;
  const auto targets = resolve(map);
  auto final_code = [&](Covariate c, const std::string& code) {
    auto it = targets.find({c, code});
    return it == targets.end() ? code : it->second;
  };

  TotalsTable out;
  out.wave = totals.wave;
  out.grand_total = totals.grand_total;
  out.grand_rel_se = totals.grand_rel_se;

  std::map<TotalsTable::MarginalKey, double> variance;
  std::set<TotalsTable::MarginalKey> has_se;
  for (const auto& [key, value] : totals.marginal_totals) {
    const TotalsTable::MarginalKey target{key.first, final_code(key.first, key.second)};
    out.marginal_totals[target] += value;
    auto se = totals.rel_se.find(key);
    if (se != totals.rel_se.end()) {
      const double sd = se->second / 100.0 * value;
      variance[target] += sd * sd;
      has_se.insert(target);
    }
  }
  for (const auto& key : has_se) {
    out.rel_se[key] = 100.0 * std::sqrt(variance[key]) / out.marginal_totals[key];
  }
  for (const auto& [key, value] : totals.cross_totals) {
    out.cross_totals[{final_code(Covariate::nace, key.first), final_code(Covariate::occupation, key.second)}] += value;
  }
  return out;
}

}  // namespace skillcal

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "skillcal/data_model.hpp"

namespace skillcal {

struct ColumnLabel {
  bool intercept = false;
  Covariate covariate = Covariate::occupation;
  std::string category;

  static ColumnLabel make_intercept() { return ColumnLabel{true, Covariate::occupation, {}}; }
  std::string to_string() const;

  friend bool operator==(const ColumnLabel&, const ColumnLabel&) = default;
};

/// One-hot expansion of categorical covariates.
///
/// Two encodings share one dictionary: full one-hot (no intercept) for
/// calibration constraints, and baseline-dropped with a leading ones column
/// for model fitting. In the latter the first dictionary category of each
/// covariate is the reference level.
struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<ColumnLabel> column_labels;
  std::vector<Covariate> covariates;
  std::map<Covariate, std::string> reference_levels;
  bool has_intercept = false;
  // Mixed-radix cell id of each row over `covariates`, used to group rows.
  std::vector<std::uint64_t> row_cells;
  std::vector<std::size_t> cell_radix;  // dictionary size per covariate

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

/// Encodes every record. Requested covariates must be complete.
DesignMatrix encode(const AdSample& sample, std::span<const Covariate> covariates, bool intercept);
DesignMatrix encode_rows(const AdSample& sample, std::span<const std::size_t> rows,
                         std::span<const Covariate> covariates, bool intercept);
std::vector<Covariate> parse_covariates(std::span<const std::string> names);  // throws UnknownCovariate

struct TotalsVector {
  Eigen::VectorXd values;
  std::vector<ColumnLabel> labels;
};

/// Looks up the total of every matrix column; the intercept maps to the grand total.
TotalsVector totals_vector(const TotalsTable& totals, const DesignMatrix& matrix);

/// Explicit category collapsing, applied identically to ads and totals.
struct CollapseRule {
  Covariate covariate = Covariate::occupation;
  std::string from;
  std::string to;

  friend bool operator==(const CollapseRule&, const CollapseRule&) = default;
};

struct CollapseMap {
  std::vector<CollapseRule> rules;

  // Lines of the form `covariate: from_category -> to_category`; blank lines
  // and lines starting with '#' are ignored.
  static CollapseMap parse(std::string_view text);
  std::string to_string() const;
  bool empty() const noexcept { return rules.empty(); }
};

inline constexpr std::size_t kDefaultCollapseThreshold = 20;

/// Keeps the rules whose source category has fewer than `threshold` records
/// in at least one wave of the sample.
CollapseMap active_rules(const CollapseMap& map, const AdSample& sample,
                         std::size_t threshold = kDefaultCollapseThreshold);

/// Relabels records and drops collapsed codes from the dictionaries.
AdSample apply_collapse(const AdSample& sample, const CollapseMap& map);
/// Merges collapsed marginal and cross totals; merged relative standard
/// errors combine the component standard deviations in quadrature.
TotalsTable apply_collapse(const TotalsTable& totals, const CollapseMap& map);

}  // namespace skillcal

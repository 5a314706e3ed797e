#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace skillcal {

/// Probability that a random positive outscores a random negative; ties count
/// one half. Throws OneClassOnly.
double auc(std::span<const std::uint8_t> y, std::span<const double> scores);

/// Same statistic from per-score counts of positives and negatives.
double auc_grouped(std::span<const double> scores, std::span<const double> positives,
                   std::span<const double> negatives);

/// sqrt(chi2 / (n (min(r, c) - 1))) without continuity correction.
/// Throws DegenerateTable when either variable has fewer than two levels.
double cramers_v(std::span<const int> a, std::span<const int> b);
double cramers_v(const std::vector<std::vector<double>>& table);

struct DiagnosticReport {
  std::map<std::pair<std::string, std::string>, double> auc;        // (skill, estimator)
  std::map<std::pair<std::string, std::string>, double> cramers_v;  // (skill, covariate)
};

}  // namespace skillcal

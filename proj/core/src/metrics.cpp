#include "skillcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "skillcal/error.hpp"

namespace skillcal {

double auc(std::span<const std::uint8_t> y, std::span<const double> scores) {
  if (y.size() != scores.size()) fail(ErrorCode::DimensionMismatch, "labels and scores differ in length");
  std::vector<double> pos(y.size()), neg(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > 1) fail(ErrorCode::InvalidArgument, "labels must be 0/1");
    pos[i] = y[i];
    neg[i] = 1.0 - y[i];
  }
  return auc_grouped(scores, pos, neg);
}

double auc_grouped(std::span<const double> scores, std::span<const double> positives,
                   std::span<const double> negatives) {
  if (scores.size() != positives.size() || scores.size() != negatives.size()) {
    fail(ErrorCode::DimensionMismatch, "grouped AUC inputs differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double total_pos = 0.0, total_neg = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    total_pos += positives[i];
    total_neg += negatives[i];
  }
  if (total_pos <= 0.0 || total_neg <= 0.0) fail(ErrorCode::OneClassOnly, "AUC needs both classes");

  // Walk tie blocks in increasing score order.
  double neg_below = 0.0;
  double wins = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double block_pos = 0.0, block_neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      block_pos += positives[order[j]];
      block_neg += negatives[order[j]];
      ++j;
    }
    wins += block_pos * (neg_below + 0.5 * block_neg);
    neg_below += block_neg;
    i = j;
  }
  return wins / (total_pos * total_neg);
}

double cramers_v(const std::vector<std::vector<double>>& table) {
  const std::size_t r = table.size();
  const std::size_t c = r ? table.front().size() : 0;
  std::vector<double> row(r, 0.0), col(c, 0.0);
  double n = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (table[i].size() != c) fail(ErrorCode::DimensionMismatch, "ragged contingency table");
    for (std::size_t j = 0; j < c; ++j) {
      row[i] += table[i][j];
      col[j] += table[i][j];
      n += table[i][j];
    }
  }
  const auto rows_used = std::count_if(row.begin(), row.end(), [](double v) { return v > 0.0; });
  const auto cols_used = std::count_if(col.begin(), col.end(), [](double v) { return v > 0.0; });
  if (rows_used < 2 || cols_used < 2) fail(ErrorCode::DegenerateTable, "each variable needs two observed levels");

  // Perfect association: every used row, or every used column, has a single
  // nonzero cell. The sum below only reaches 1 up to rounding there.
  auto single_cell = [&](bool by_row) {
    const std::size_t outer = by_row ? r : c, inner = by_row ? c : r;
    for (std::size_t i = 0; i < outer; ++i) {
      std::size_t nonzero = 0;
      for (std::size_t j = 0; j < inner; ++j) nonzero += (by_row ? table[i][j] : table[j][i]) != 0.0;
      if (nonzero > 1) return false;
    }
    return true;
  };
  if (single_cell(true) || single_cell(false)) return 1.0;

  double chi2 = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (row[i] == 0.0) continue;
    for (std::size_t j = 0; j < c; ++j) {
      if (col[j] == 0.0) continue;
      const double expected = row[i] * col[j] / n;
      const double diff = table[i][j] - expected;
      chi2 += diff * diff / expected;
    }
  }
  const double k = static_cast<double>(std::min(rows_used, cols_used) - 1);
  return std::min(1.0, std::sqrt(chi2 / (n * k)));
}

double cramers_v(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) fail(ErrorCode::DimensionMismatch, "variables differ in length");
  if (a.empty()) fail(ErrorCode::DegenerateTable, "empty table");
  std::vector<int> la(a.begin(), a.end()), lb(b.begin(), b.end());
  std::sort(la.begin(), la.end());
  la.erase(std::unique(la.begin(), la.end()), la.end());
  std::sort(lb.begin(), lb.end());
  lb.erase(std::unique(lb.begin(), lb.end()), lb.end());
  std::vector<std::vector<double>> table(la.size(), std::vector<double>(lb.size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto r = std::lower_bound(la.begin(), la.end(), a[i]) - la.begin();
    const auto c = std::lower_bound(lb.begin(), lb.end(), b[i]) - lb.begin();
    table[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] += 1.0;
  }
  return cramers_v(table);
}

}  // namespace skillcal

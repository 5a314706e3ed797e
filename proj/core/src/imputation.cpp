#include <limits>

#include "skillcal/data_model.hpp"
#include "skillcal/error.hpp"

namespace skillcal {

AdSample impute_gower_1nn(const AdSample& sample) {
  ImputationSummary ignored;
  return impute_gower_1nn(sample, ignored);
}

// Gower distance with every column categorical reduces to the share of
// mismatching columns among those observed on the recipient. The denominator
// is fixed per recipient, so the nearest donor minimises the mismatch count.
AdSample impute_gower_1nn(const AdSample& sample, ImputationSummary& summary) {
  summary = {};
  AdSample out = sample;
  const std::size_t k = sample.catalog.size();

  for (Wave wave : sample.waves()) {
    std::vector<std::size_t> donors;
    std::vector<std::size_t> recipients;
    for (std::size_t i = 0; i < sample.records.size(); ++i) {
      const auto& r = sample.records[i];
      if (r.wave != wave) continue;
      (r.complete() ? donors : recipients).push_back(i);
    }
    if (recipients.empty()) continue;
    if (donors.empty()) {
      fail(ErrorCode::NoDonorAvailable, "wave " + std::to_string(wave) + " has no fully observed record");
    }

    for (std::size_t ri : recipients) {
      const AdRecord& rec = sample.records[ri];
      std::size_t best = donors.front();
      std::size_t best_mismatch = std::numeric_limits<std::size_t>::max();
      for (std::size_t di : donors) {
        const AdRecord& donor = sample.records[di];
        std::size_t mismatch = 0;
        for (std::size_t c = 0; c < kCovariateCount; ++c) {
          if (rec.covariates[c] != kMissing && rec.covariates[c] != donor.covariates[c]) ++mismatch;
        }
        if (mismatch >= best_mismatch) continue;
        for (std::size_t s = 0; s < k && mismatch < best_mismatch; ++s) {
          if (rec.skills[s] != donor.skills[s]) ++mismatch;
        }
        if (mismatch < best_mismatch) {
          best_mismatch = mismatch;
          best = di;
          if (mismatch == 0) break;
        }
      }
      AdRecord& target = out.records[ri];
      const AdRecord& donor = sample.records[best];
      for (std::size_t c = 0; c < kCovariateCount; ++c) {
        if (target.covariates[c] == kMissing) {
          target.covariates[c] = donor.covariates[c];
          ++summary.cells_imputed[c];
        }
      }
      ++summary.records_imputed;
    }
  }
  return out;
}

}  // namespace skillcal

#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "skillcal/design_matrix.hpp"

namespace skillcal {

enum class WeightBasis { pseudo_design, greg, model_calibrated };

struct WeightVector {
  Eigen::VectorXd values;
  WeightBasis basis = WeightBasis::pseudo_design;
  std::string outcome_tag = "shared";
  // Set when a model-calibration request fell back to intercept-only.
  bool degenerate_model = false;

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
  double sum() const { return values.sum(); }
  double min() const { return values.minCoeff(); }
  double max() const { return values.maxCoeff(); }
  std::size_t negative_count() const;
};

/// Constant weights N/n.
WeightVector pseudo_weights(std::size_t n, double population_size);

// Singular-value ratio below which X'DX is treated as singular.
inline constexpr double kRankTolerance = 1e-10;

/// Chi-square distance calibration (q_i = 1):
///   w = d + D X (X' D X)^{-1} (T - X' d).
/// Negative weights are allowed. Throws RankDeficient or DimensionMismatch.
WeightVector calibrate_chi2(const WeightVector& d, const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& totals);
WeightVector calibrate_chi2(const WeightVector& d, const DesignMatrix& x, const TotalsVector& totals);

/// Calibrates to M = (1, mu_hat) with targets (N_hat, T_mu). Falls back to
/// intercept-only rescaling when mu_hat is constant (flagged on the result).
WeightVector calibrate_model_assisted(const WeightVector& d, const Eigen::Ref<const Eigen::VectorXd>& mu_hat,
                                      double n_hat, double t_mu);

/// Largest |w'X - T|_j / |T_j| over components.
double max_constraint_error(const Eigen::Ref<const Eigen::VectorXd>& w, const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& totals);

/// sum_i (w_i - d_i)^2 / d_i
double chi2_distance(const Eigen::Ref<const Eigen::VectorXd>& w, const Eigen::Ref<const Eigen::VectorXd>& d);

}  // namespace skillcal

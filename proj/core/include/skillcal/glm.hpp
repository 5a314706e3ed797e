#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skillcal/design_matrix.hpp"

namespace skillcal {

// ---------------------------------------------------------------------------
// Grouped binomial data. One-hot designs have few distinct rows, so units are
// collapsed to (row pattern, trials, successes) before fitting; the grouped
// likelihood equals the unit-level likelihood exactly.
// ---------------------------------------------------------------------------

struct GroupedDesign {
  Eigen::MatrixXd rows;  // G x p, intercept column removed
  std::vector<std::uint32_t> group_of_unit;
  std::vector<ColumnLabel> column_labels;  // p labels (no intercept)
  std::vector<Covariate> covariates;
  std::map<Covariate, std::string> reference_levels;

  std::size_t groups() const noexcept { return static_cast<std::size_t>(rows.rows()); }
  std::size_t units() const noexcept { return group_of_unit.size(); }
};

/// Requires a design with a leading intercept column.
GroupedDesign group_rows(const DesignMatrix& x);

struct BinomialProblem {
  Eigen::MatrixXd x;          // G x p
  Eigen::VectorXd trials;     // m_g >= 0
  Eigen::VectorXd successes;  // 0 <= s_g <= m_g

  double total_trials() const { return trials.sum(); }
};

BinomialProblem aggregate(const GroupedDesign& design, std::span<const std::uint8_t> y);

struct Coefficients {
  double intercept = 0.0;
  Eigen::VectorXd beta;
};

/// Mean negative log-likelihood (1/n) sum_g [m_g log(1 + e^eta_g) - s_g eta_g].
double mean_negative_loglik(const BinomialProblem& problem, const Coefficients& coef);
/// Gradient of the mean negative log-likelihood with respect to beta (no intercept).
Eigen::VectorXd mean_nll_gradient(const BinomialProblem& problem, const Coefficients& coef);

// ---------------------------------------------------------------------------
// Model fits
// ---------------------------------------------------------------------------

struct CvPoint {
  double lambda = 0.0;
  double mean_deviance = 0.0;
};

struct ModelFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;  // aligned to column_labels
  double lambda = 0.0;
  Eigen::VectorXd alpha_weights;  // +inf excludes the coefficient
  double gamma = 1.0;
  std::string family_tag = "logistic";
  std::vector<CvPoint> cv_curve;
  std::size_t lambda_index = 0;

  std::vector<ColumnLabel> column_labels;
  std::vector<Covariate> covariates;
  std::map<Covariate, std::string> reference_levels;
  int iterations = 0;
};

using CellKey = std::vector<std::string>;  // one category code per model covariate

struct FittedMeans {
  Eigen::VectorXd values;
  std::map<CellKey, double> by_cell;
};

inline double inverse_logit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

struct MleOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;  // on the summed log-likelihood
  double separation_bound = 30.0;
};

/// Newton-Raphson logistic MLE. Throws SeparationDetected when a coefficient
/// exceeds the bound in magnitude, NonConvergence after max_iterations.
Coefficients solve_logistic_mle(const BinomialProblem& problem, const MleOptions& options = {},
                                int* iterations = nullptr);
ModelFit fit_logistic_mle(std::span<const std::uint8_t> y, const DesignMatrix& x, const MleOptions& options = {});
ModelFit fit_logistic_mle(const GroupedDesign& design, std::span<const std::uint8_t> y,
                          const MleOptions& options = {});

/// Ridge logistic regression minimising mean NLL + (penalty / 2) |beta|^2.
Coefficients solve_logistic_ridge(const BinomialProblem& problem, double penalty);
ModelFit fit_logistic_ridge(const GroupedDesign& design, std::span<const std::uint8_t> y, double penalty);

// ---------------------------------------------------------------------------
// L1-penalised logistic regression by coordinate descent
// ---------------------------------------------------------------------------

inline constexpr double kExcluded = std::numeric_limits<double>::infinity();

/// The closed-form coordinate update sign(z) max(|z| - threshold, 0) / denominator.
double soft_threshold_update(double z, double threshold, double denominator);

/// Mean NLL + lambda * sum_j factor_j |beta_j| (excluded coefficients contribute 0).
double penalized_objective(const BinomialProblem& problem, const Coefficients& coef,
                           const Eigen::VectorXd& penalty_factors, double lambda);

/// Smallest lambda at which every penalised coefficient is zero.
double lambda_max(const BinomialProblem& problem, const Eigen::VectorXd& penalty_factors);

struct LassoSolverOptions {
  int max_sweeps = 10000;
  double tolerance = 1e-10;  // largest coefficient change per sweep
  // Called after every sweep with the penalised objective.
  std::function<void(int, double)> on_sweep;
};

struct LassoSolution {
  Coefficients coef;
  int sweeps = 0;
  double objective = 0.0;
};

/// Each sweep updates every coordinate of a quadratic model of the likelihood
/// (intercept decoupled by weighted centring) and then backtracks so the
/// penalised objective never increases. Throws NonConvergence.
LassoSolution solve_lasso(const BinomialProblem& problem, const Eigen::VectorXd& penalty_factors, double lambda,
                          const Coefficients* warm_start = nullptr, const LassoSolverOptions& options = {});

struct LassoOptions {
  int folds = 10;
  int n_lambda = 100;
  double lambda_min_ratio = 1e-4;
  std::uint64_t seed = 1;
  std::optional<double> fixed_lambda;  // skip cross-validation
  LassoSolverOptions solver;
};

/// Decreasing log-spaced grid from lambda_max to lambda_min_ratio * lambda_max.
std::vector<double> lambda_grid(double lambda_max, int n_lambda, double lambda_min_ratio);

/// Fold label per unit, stratified by outcome, deterministic in the seed.
std::vector<std::uint32_t> stratified_folds(std::span<const std::uint8_t> y, int folds, std::uint64_t seed);

ModelFit fit_lasso_path(std::span<const std::uint8_t> y, const DesignMatrix& x, const Eigen::VectorXd& alpha_weights,
                        const LassoOptions& options = {});
ModelFit fit_lasso_path(const GroupedDesign& design, std::span<const std::uint8_t> y,
                        const Eigen::VectorXd& alpha_weights, const LassoOptions& options = {});

/// Plain LASSO: all adaptive weights equal to one.
ModelFit fit_lasso(std::span<const std::uint8_t> y, const DesignMatrix& x, const LassoOptions& options = {});
ModelFit fit_lasso(const GroupedDesign& design, std::span<const std::uint8_t> y, const LassoOptions& options = {});

/// alpha_j = 1 / |pilot_j|; a zero pilot coefficient gives +inf (excluded).
Eigen::VectorXd adaptive_weights(const Eigen::VectorXd& pilot);

/// Ridge penalty used for the adaptive pilot: 1e-3 times lambda_max of the
/// unit-weight LASSO problem.
double ridge_pilot_penalty(const BinomialProblem& problem);

ModelFit fit_adaptive_lasso(std::span<const std::uint8_t> y, const DesignMatrix& x, double gamma,
                            const LassoOptions& options = {});
ModelFit fit_adaptive_lasso(const GroupedDesign& design, std::span<const std::uint8_t> y, double gamma,
                            const LassoOptions& options = {});
ModelFit fit_adaptive_lasso_with_pilot(const GroupedDesign& design, std::span<const std::uint8_t> y,
                                       const Eigen::VectorXd& pilot, double gamma, const LassoOptions& options = {});

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Throws ColumnMismatch unless x has an intercept and the fit's columns.
FittedMeans predict_means(const ModelFit& fit, const DesignMatrix& x);

/// Predicted mean for one covariate cell (codes ordered as fit.covariates).
/// Throws UncoveredCell for codes the model does not know.
double predict_cell(const ModelFit& fit, const CellKey& cell);

/// Linear predictor per group of a grouped design.
Eigen::VectorXd group_linear_predictor(const ModelFit& fit, const GroupedDesign& design);

}  // namespace skillcal

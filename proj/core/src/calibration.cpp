#include "skillcal/calibration.hpp"

#include <cmath>

#include "skillcal/error.hpp"

namespace skillcal {

std::size_t WeightVector::negative_count() const {
  return static_cast<std::size_t>((values.array() < 0.0).count());
}

WeightVector pseudo_weights(std::size_t n, double population_size) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "pseudo_weights needs n >= 1");
  if (!(population_size > 0.0) || !std::isfinite(population_size)) {
    fail(ErrorCode::InvalidArgument, "pseudo_weights needs N > 0");
  }
  WeightVector w;
  w.values = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), population_size / static_cast<double>(n));
  w.basis = WeightBasis::pseudo_design;
  return w;
}

namespace {

// Solves A lambda = r with the SVD of the symmetric p x p matrix A, refusing
// numerically singular systems, then polishes with one refinement step.
Eigen::VectorXd solve_rank_checked(const Eigen::MatrixXd& a, const Eigen::VectorXd& r) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || !(s(0) > 0.0) || s(s.size() - 1) < kRankTolerance * s(0)) {
    fail(ErrorCode::RankDeficient, "X'DX is numerically singular (smallest/largest singular value " +
                                       std::to_string(s.size() ? s(s.size() - 1) / s(0) : 0.0) + ")");
  }
  Eigen::VectorXd lambda = svd.solve(r);
  const Eigen::VectorXd residual = r - a * lambda;
  lambda += svd.solve(residual);
  return lambda;
}

}  // namespace

WeightVector calibrate_chi2(const WeightVector& d, const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& totals) {
  if (x.rows() != d.values.size()) fail(ErrorCode::DimensionMismatch, "X rows differ from weight count");
  if (x.cols() != totals.size()) fail(ErrorCode::DimensionMismatch, "X columns differ from totals length");
  if (x.cols() == 0) fail(ErrorCode::DimensionMismatch, "no calibration variables");

  const Eigen::VectorXd r = totals - x.transpose() * d.values;
  WeightVector w;
  w.basis = WeightBasis::greg;
  w.outcome_tag = d.outcome_tag;
  if ((r.array() == 0.0).all()) {
    w.values = d.values;
    return w;
  }
  const Eigen::MatrixXd dx = x.array().colwise() * d.values.array();
  const Eigen::MatrixXd a = x.transpose() * dx;
  Eigen::VectorXd lambda = solve_rank_checked(a, r);
  w.values = d.values + dx * lambda;

  // One extra correction in case cancellation left a residual above 1e-12.
  const Eigen::VectorXd r2 = totals - x.transpose() * w.values;
  if (r2.cwiseAbs().maxCoeff() > 1e-12 * totals.cwiseAbs().maxCoeff()) {
    w.values += dx * solve_rank_checked(a, r2);
  }
  return w;
}

WeightVector calibrate_chi2(const WeightVector& d, const DesignMatrix& x, const TotalsVector& totals) {
  if (x.column_labels != totals.labels) fail(ErrorCode::ColumnMismatch, "totals labels do not match design columns");
  return calibrate_chi2(d, x.values, totals.values);
}

WeightVector calibrate_model_assisted(const WeightVector& d, const Eigen::Ref<const Eigen::VectorXd>& mu_hat,
                                      double n_hat, double t_mu) {
  if (mu_hat.size() != d.values.size()) fail(ErrorCode::DimensionMismatch, "mu_hat length differs from weights");
  if (!(n_hat > 0.0) || !std::isfinite(n_hat)) fail(ErrorCode::InvalidArgument, "N_hat must be positive");
  if (!mu_hat.allFinite() || !std::isfinite(t_mu)) fail(ErrorCode::InvalidArgument, "non-finite model predictions");

  const double lo = mu_hat.minCoeff();
  const double hi = mu_hat.maxCoeff();
  const double scale = std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
  auto intercept_only = [&] {
    WeightVector w;
    w.values = d.values * (n_hat / d.values.sum());
    w.basis = WeightBasis::model_calibrated;
    w.outcome_tag = d.outcome_tag;
    w.degenerate_model = true;
    return w;
  };
  if (hi - lo <= 1e-12 * scale) return intercept_only();

  Eigen::MatrixXd m(mu_hat.size(), 2);
  m.col(0).setOnes();
  m.col(1) = mu_hat;
  Eigen::Vector2d target(n_hat, t_mu);
  try {
    WeightVector w = calibrate_chi2(d, m, target);
    w.basis = WeightBasis::model_calibrated;
    return w;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::RankDeficient) return intercept_only();
    throw;
  }
}

double max_constraint_error(const Eigen::Ref<const Eigen::VectorXd>& w, const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& totals) {
  const Eigen::VectorXd diff = x.transpose() * w - totals;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < diff.size(); ++j) {
    const double denom = std::abs(totals(j)) > 0.0 ? std::abs(totals(j)) : 1.0;
    worst = std::max(worst, std::abs(diff(j)) / denom);
  }
  return worst;
}

double chi2_distance(const Eigen::Ref<const Eigen::VectorXd>& w, const Eigen::Ref<const Eigen::VectorXd>& d) {
  return ((w - d).array().square() / d.array()).sum();
}

}  // namespace skillcal

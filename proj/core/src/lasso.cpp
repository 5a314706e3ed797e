#include <algorithm>
#include <cmath>
#include <random>

#include "skillcal/error.hpp"
#include "skillcal/glm.hpp"
#include "skillcal/random.hpp"

namespace skillcal {

namespace {

constexpr double kQuadraticExit = 1e-5;

double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

// Column-compressed view of the grouped design (one-hot columns are sparse).
struct SparseColumns {
  std::vector<std::size_t> start;
  std::vector<Eigen::Index> row;
  std::vector<double> value;
  // Row-compressed copy for Gram accumulation.
  std::vector<std::size_t> row_start;
  std::vector<Eigen::Index> row_col;
  std::vector<double> row_value;

  explicit SparseColumns(const Eigen::MatrixXd& x) {
    row_start.reserve(static_cast<std::size_t>(x.rows()) + 1);
    row_start.push_back(0);
    for (Eigen::Index g = 0; g < x.rows(); ++g) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (x(g, j) != 0.0) {
          row_col.push_back(j);
          row_value.push_back(x(g, j));
        }
      }
      row_start.push_back(row_col.size());
    }
    start.reserve(static_cast<std::size_t>(x.cols()) + 1);
    start.push_back(0);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      for (Eigen::Index g = 0; g < x.rows(); ++g) {
        if (x(g, j) != 0.0) {
          row.push_back(g);
          value.push_back(x(g, j));
        }
      }
      start.push_back(row.size());
    }
  }
};

void sparse_linear(const SparseColumns& cols, const Coefficients& c, Eigen::VectorXd& eta) {
  eta.setConstant(c.intercept);
  for (Eigen::Index j = 0; j < c.beta.size(); ++j) {
    if (c.beta(j) == 0.0) continue;
    for (std::size_t k = cols.start[j]; k < cols.start[j + 1]; ++k) eta(cols.row[k]) += cols.value[k] * c.beta(j);
  }
}

// Solves A x = b in place for the leading m x m block, reading only the lower
// triangle of `a`. Returns false when A is not numerically positive definite.
bool cholesky_solve(Eigen::MatrixXd& a, Eigen::Index m, Eigen::VectorXd& b) {
  for (Eigen::Index j = 0; j < m; ++j) {
    double diag = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= a(j, k) * a(j, k);
    if (!(diag > 1e-14 * std::abs(a(j, j))) || !(diag > 0.0)) return false;
    const double l = std::sqrt(diag);
    a(j, j) = l;
    for (Eigen::Index i = j + 1; i < m; ++i) {
      double sum = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) sum -= a(i, k) * a(j, k);
      a(i, j) = sum / l;
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    double sum = b(i);
    for (Eigen::Index k = 0; k < i; ++k) sum -= a(i, k) * b(k);
    b(i) = sum / a(i, i);
  }
  for (Eigen::Index i = m - 1; i >= 0; --i) {
    double sum = b(i);
    for (Eigen::Index k = i + 1; k < m; ++k) sum -= a(k, i) * b(k);
    b(i) = sum / a(i, i);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::isfinite(b(i))) return false;
  }
  return true;
}

void check_factors(const BinomialProblem& problem, const Eigen::VectorXd& factors) {
  if (factors.size() != problem.x.cols()) fail(ErrorCode::DimensionMismatch, "penalty factor count differs from columns");
  for (Eigen::Index j = 0; j < factors.size(); ++j) {
    if (!(factors(j) > 0.0)) fail(ErrorCode::InvalidArgument, "penalty factors must be positive or +inf");
  }
}

double success_fraction(const BinomialProblem& problem) {
  const double n = problem.total_trials();
  if (!(n > 0.0)) fail(ErrorCode::InvalidArgument, "no observations");
  const double s = problem.successes.sum();
  if (s <= 0.0 || s >= n) fail(ErrorCode::OneClassOnly, "outcome has a single class");
  return s / n;
}

// Penalised objective; also stores the fitted means in `mu` when given.
double objective_at(const BinomialProblem& problem, const Eigen::VectorXd& eta, const Eigen::VectorXd& beta,
                    const Eigen::VectorXd& factors, double lambda, double n, Eigen::VectorXd* mu = nullptr) {
  double sum = 0.0;
  for (Eigen::Index g = 0; g < eta.size(); ++g) {
    const double t = std::exp(-std::abs(eta(g)));
    if (mu) (*mu)(g) = eta(g) >= 0.0 ? 1.0 / (1.0 + t) : t / (1.0 + t);
    if (problem.trials(g) == 0.0) continue;
    sum += problem.trials(g) * (std::max(eta(g), 0.0) + std::log1p(t)) - problem.successes(g) * eta(g);
  }
  double pen = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (std::isfinite(factors(j))) pen += factors(j) * std::abs(beta(j));
  }
  return sum / n + lambda * pen;
}

LassoSolution solve_sparse(const BinomialProblem& problem, const SparseColumns& cols, const Eigen::VectorXd& factors,
                           double lambda, const Coefficients* warm, const LassoSolverOptions& options) {
  const double ybar = success_fraction(problem);
  const double n = problem.total_trials();
  const Eigen::Index groups = problem.x.rows();
  const Eigen::Index p = problem.x.cols();

  Coefficients coef;
  if (warm) {
    if (warm->beta.size() != p) fail(ErrorCode::DimensionMismatch, "warm start has wrong length");
    coef = *warm;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!std::isfinite(factors(j))) coef.beta(j) = 0.0;
    }
  } else {
    coef.intercept = std::log(ybar / (1.0 - ybar));
    coef.beta = Eigen::VectorXd::Zero(p);
  }

  Eigen::VectorXd eta(groups), cand_eta(groups);
  sparse_linear(cols, coef, eta);
  Eigen::VectorXd mu(groups), cand_mu(groups);
  double current = objective_at(problem, eta, coef.beta, factors, lambda, n, &mu);
  Eigen::VectorXd v(groups), e(groups), h(p), step_beta(p);
  Coefficients next, candidate;
  Eigen::MatrixXd chol(p + 1, p + 1);
  Eigen::VectorXd d(p + 1);
  std::vector<Eigen::Index> active;
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(p) + 1);
  active.reserve(static_cast<std::size_t>(p) + 1);

  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    // Quadratic model of the mean NLL at the current point.
    for (Eigen::Index g = 0; g < groups; ++g) {
      v(g) = problem.trials(g) * mu(g) * (1.0 - mu(g)) / n;
      e(g) = (problem.successes(g) - problem.trials(g) * mu(g)) / n;
    }
    for (Eigen::Index j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t k = cols.start[j]; k < cols.start[j + 1]; ++k) s += v(cols.row[k]) * cols.value[k] * cols.value[k];
      h(j) = s;
    }
    const double v_sum = v.sum();
    bool inner_exact = false;

    next = coef;
    std::vector<signed char> support(static_cast<std::size_t>(p), 0), last_support;
    bool polished = false;
    for (int pass = 0; pass < 1000; ++pass) {
      double change = 0.0;
      if (v_sum > 0.0) {
        const double d0 = e.sum() / v_sum;
        if (d0 != 0.0) {
          next.intercept += d0;
          e -= d0 * v;
          change = std::abs(d0);
        }
      }
      for (Eigen::Index j = 0; j < p; ++j) {
        const double old = next.beta(j);
        double updated = 0.0;
        if (std::isfinite(factors(j)) && h(j) > 1e-300) {
          double rho = 0.0;
          for (std::size_t k = cols.start[j]; k < cols.start[j + 1]; ++k) rho += cols.value[k] * e(cols.row[k]);
          updated = soft_threshold_update(h(j) * old + rho, lambda * factors(j), h(j));
        }
        const double delta = updated - old;
        if (delta == 0.0) continue;
        next.beta(j) = updated;
        for (std::size_t k = cols.start[j]; k < cols.start[j + 1]; ++k) {
          e(cols.row[k]) -= v(cols.row[k]) * cols.value[k] * delta;
        }
        change = std::max(change, std::abs(delta));
      }
      if (change < 1e-13) {
        inner_exact = true;
        break;
      }

      // Once support and signs settle, solve the quadratic on the support
      // directly; plain coordinate descent crawls when a reference level is small.
      for (Eigen::Index j = 0; j < p; ++j) {
        support[static_cast<std::size_t>(j)] = static_cast<signed char>((next.beta(j) > 0.0) - (next.beta(j) < 0.0));
      }
      if (support != last_support) {
        last_support = support;
        polished = false;
        continue;
      }
      if (polished) continue;
      polished = true;
      // Lower triangle of [1, X_A]' V [1, X_A] over the active columns.
      active.assign(1, 0);
      std::fill(slot.begin(), slot.end(), -1);
      slot[0] = 0;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (support[static_cast<std::size_t>(j)] == 0) continue;
        slot[static_cast<std::size_t>(j) + 1] = static_cast<Eigen::Index>(active.size());
        active.push_back(j + 1);
      }
      const auto m = static_cast<Eigen::Index>(active.size());
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) chol(a, b) = 0.0;
      }
      chol(0, 0) = v_sum;
      for (Eigen::Index g = 0; g < groups; ++g) {
        const double vg = v(g);
        if (vg == 0.0) continue;
        for (std::size_t a = cols.row_start[g]; a < cols.row_start[g + 1]; ++a) {
          const Eigen::Index ia = slot[static_cast<std::size_t>(cols.row_col[a]) + 1];
          if (ia < 0) continue;
          const double xa = vg * cols.row_value[a];
          chol(ia, 0) += xa;
          for (std::size_t b = cols.row_start[g]; b < cols.row_start[g + 1]; ++b) {
            const Eigen::Index ib = slot[static_cast<std::size_t>(cols.row_col[b]) + 1];
            if (ib > 0 && ib <= ia) chol(ia, ib) += xa * cols.row_value[b];
          }
        }
      }
      d(0) = e.sum();
      for (Eigen::Index a = 1; a < m; ++a) {
        const Eigen::Index j = active[a] - 1;
        double rho = 0.0;
        for (std::size_t k = cols.start[j]; k < cols.start[j + 1]; ++k) rho += cols.value[k] * e(cols.row[k]);
        d(a) = rho - lambda * factors(j) * support[static_cast<std::size_t>(j)];
      }
      if (!cholesky_solve(chol, m, d)) continue;
      bool signs_hold = true;
      for (Eigen::Index a = 1; a < m && signs_hold; ++a) {
        const Eigen::Index j = active[a] - 1;
        const double updated = next.beta(j) + d(a);
        signs_hold = updated * support[static_cast<std::size_t>(j)] > 0.0;
      }
      if (!signs_hold) continue;
      next.intercept += d(0);
      e -= d(0) * v;
      for (Eigen::Index a = 1; a < m; ++a) {
        const Eigen::Index j = active[a] - 1;
        next.beta(j) += d(a);
        for (std::size_t k = cols.start[j]; k < cols.start[j + 1]; ++k) {
          e(cols.row[k]) -= v(cols.row[k]) * cols.value[k] * d(a);
        }
      }
    }

    // Backtrack so the penalised objective never increases.
    step_beta = next.beta - coef.beta;
    const double step_b0 = next.intercept - coef.intercept;
    const double proposed = std::max(std::abs(step_b0), p ? step_beta.cwiseAbs().maxCoeff() : 0.0);
    if (proposed < options.tolerance) {
      if (options.on_sweep) options.on_sweep(sweep, current);
      return LassoSolution{coef, sweep, current};
    }
    double t = 1.0;
    candidate = next;
    sparse_linear(cols, candidate, cand_eta);
    double value = objective_at(problem, cand_eta, candidate.beta, factors, lambda, n, &cand_mu);
    // A rise at rounding level means the objective cannot rank the step; stop here.
    if (!(value <= current) && value - current <= 1e-15 * std::max(1.0, std::abs(current))) {
      if (options.on_sweep) options.on_sweep(sweep, current);
      return LassoSolution{coef, sweep, current};
    }
    int halvings = 0;
    while (!(value <= current) && halvings < 50) {
      t *= 0.5;
      candidate.intercept = coef.intercept + t * step_b0;
      candidate.beta = coef.beta + t * step_beta;
      sparse_linear(cols, candidate, cand_eta);
      value = objective_at(problem, cand_eta, candidate.beta, factors, lambda, n, &cand_mu);
      ++halvings;
    }
    double max_change = 0.0;
    if (value <= current) {
      max_change = t * proposed;
      std::swap(coef, candidate);
      eta.swap(cand_eta);
      mu.swap(cand_mu);
      current = value;
    }
    if (options.on_sweep) options.on_sweep(sweep, current);
    if (max_change < options.tolerance) return LassoSolution{coef, sweep, current};
    // A full step that solved the quadratic model exactly leaves an error of
    // order step^2, so a small one needs no confirming sweep.
    if (t == 1.0 && inner_exact && max_change < kQuadraticExit) return LassoSolution{coef, sweep, current};
  }
  fail(ErrorCode::NonConvergence, "coordinate descent did not converge in " + std::to_string(options.max_sweeps) +
                                      " sweeps at lambda " + std::to_string(lambda));
}

Eigen::VectorXd intercept_only_gradient(const BinomialProblem& problem) {
  const double ybar = success_fraction(problem);
  const Eigen::VectorXd resid = problem.trials * ybar - problem.successes;
  return problem.x.transpose() * resid / problem.total_trials();
}

double held_out_deviance(const BinomialProblem& held, const SparseColumns& cols, const Coefficients& coef,
                         Eigen::VectorXd& eta) {
  double sum = 0.0;
  sparse_linear(cols, coef, eta);
  for (Eigen::Index g = 0; g < eta.size(); ++g) {
    if (held.trials(g) == 0.0) continue;
    sum += held.trials(g) * softplus(eta(g)) - held.successes(g) * eta(g);
  }
  return 2.0 * sum;
}

ModelFit fit_from(const GroupedDesign& design, const Coefficients& coef) {
  ModelFit fit;
  fit.intercept = coef.intercept;
  fit.coefficients = coef.beta;
  fit.column_labels = design.column_labels;
  fit.covariates = design.covariates;
  fit.reference_levels = design.reference_levels;
  return fit;
}

}  // namespace

double soft_threshold_update(double z, double threshold, double denominator) {
  if (!(denominator > 0.0)) fail(ErrorCode::InvalidArgument, "coordinate update needs a positive denominator");
  const double magnitude = std::abs(z) - threshold;
  if (magnitude <= 0.0) return 0.0;
  return std::copysign(magnitude, z) / denominator;
}

double penalized_objective(const BinomialProblem& problem, const Coefficients& coef,
                           const Eigen::VectorXd& penalty_factors, double lambda) {
  check_factors(problem, penalty_factors);
  const Eigen::VectorXd eta = (problem.x * coef.beta).array() + coef.intercept;
  return objective_at(problem, eta, coef.beta, penalty_factors, lambda, problem.total_trials());
}

double lambda_max(const BinomialProblem& problem, const Eigen::VectorXd& penalty_factors) {
  check_factors(problem, penalty_factors);
  const Eigen::VectorXd grad = intercept_only_gradient(problem);
  double out = 0.0;
  for (Eigen::Index j = 0; j < grad.size(); ++j) {
    if (std::isfinite(penalty_factors(j))) out = std::max(out, std::abs(grad(j)) / penalty_factors(j));
  }
  // A hair above the boundary so every penalised coefficient is exactly zero.
  return out > 0.0 ? out * (1.0 + 1e-10) : 1e-12;
}

LassoSolution solve_lasso(const BinomialProblem& problem, const Eigen::VectorXd& penalty_factors, double lambda,
                          const Coefficients* warm_start, const LassoSolverOptions& options) {
  check_factors(problem, penalty_factors);
  if (!(lambda >= 0.0)) fail(ErrorCode::InvalidArgument, "lambda must be non-negative");
  const SparseColumns cols(problem.x);
  return solve_sparse(problem, cols, penalty_factors, lambda, warm_start, options);
}

std::vector<double> lambda_grid(double lmax, int n_lambda, double lambda_min_ratio) {
  if (!(lmax > 0.0) || n_lambda < 1 || !(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0)) {
    fail(ErrorCode::InvalidArgument, "bad lambda grid parameters");
  }
  std::vector<double> grid(static_cast<std::size_t>(n_lambda));
  if (n_lambda == 1) {
    grid[0] = lmax;
    return grid;
  }
  const double log_hi = std::log(lmax);
  const double log_lo = std::log(lmax * lambda_min_ratio);
  for (int i = 0; i < n_lambda; ++i) {
    grid[static_cast<std::size_t>(i)] = std::exp(log_hi + (log_lo - log_hi) * i / (n_lambda - 1));
  }
  grid.front() = lmax;
  return grid;
}

std::vector<std::uint32_t> stratified_folds(std::span<const std::uint8_t> y, int folds, std::uint64_t seed) {
  if (folds < 2) fail(ErrorCode::InvalidArgument, "cross-validation needs at least 2 folds");
  std::vector<std::uint32_t> out(y.size());
  std::mt19937_64 rng(seed);
  std::uint32_t next = 0;
  for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) idx.push_back(i);
    }
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(rng, i));
      std::swap(idx[i - 1], idx[j]);
    }
    // Continue the round-robin across classes so fold sizes stay balanced.
    for (std::size_t i : idx) {
      out[i] = next;
      next = (next + 1) % static_cast<std::uint32_t>(folds);
    }
  }
  return out;
}

ModelFit fit_lasso_path(const GroupedDesign& design, std::span<const std::uint8_t> y,
                        const Eigen::VectorXd& alpha_weights, const LassoOptions& options) {
  const BinomialProblem full = aggregate(design, y);
  check_factors(full, alpha_weights);
  const SparseColumns cols(full.x);

  ModelFit fit;
  if (options.fixed_lambda) {
    const LassoSolution sol = solve_sparse(full, cols, alpha_weights, *options.fixed_lambda, nullptr, options.solver);
    fit = fit_from(design, sol.coef);
    fit.lambda = *options.fixed_lambda;
    fit.iterations = sol.sweeps;
  } else {
    const std::vector<double> grid =
        lambda_grid(lambda_max(full, alpha_weights), options.n_lambda, options.lambda_min_ratio);
    std::vector<Coefficients> path;
    path.reserve(grid.size());
    int sweeps = 0;
    for (double lambda : grid) {
      const LassoSolution sol =
          solve_sparse(full, cols, alpha_weights, lambda, path.empty() ? nullptr : &path.back(), options.solver);
      path.push_back(sol.coef);
      sweeps += sol.sweeps;
    }

    const std::vector<std::uint32_t> fold_of = stratified_folds(y, options.folds, options.seed);
    std::vector<double> deviance(grid.size(), 0.0);
    for (int k = 0; k < options.folds; ++k) {
      BinomialProblem held{full.x, Eigen::VectorXd::Zero(full.x.rows()), Eigen::VectorXd::Zero(full.x.rows())};
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (fold_of[i] != static_cast<std::uint32_t>(k)) continue;
        const auto g = static_cast<Eigen::Index>(design.group_of_unit[i]);
        held.trials(g) += 1.0;
        held.successes(g) += y[i];
      }
      if (held.total_trials() == 0.0) continue;
      const BinomialProblem train{full.x, full.trials - held.trials, full.successes - held.successes};
      const Coefficients* warm = nullptr;
      Coefficients last;
      Eigen::VectorXd held_eta(full.x.rows());
      for (std::size_t l = 0; l < grid.size(); ++l) {
        last = solve_sparse(train, cols, alpha_weights, grid[l], warm, options.solver).coef;
        warm = &last;
        deviance[l] += held_out_deviance(held, cols, last, held_eta);
      }
    }
    std::size_t best = 0;
    for (std::size_t l = 0; l < grid.size(); ++l) {
      deviance[l] /= full.total_trials();
      if (deviance[l] < deviance[best]) best = l;
    }
    fit = fit_from(design, path[best]);
    fit.lambda = grid[best];
    fit.lambda_index = best;
    fit.iterations = sweeps;
    fit.cv_curve.reserve(grid.size());
    for (std::size_t l = 0; l < grid.size(); ++l) fit.cv_curve.push_back(CvPoint{grid[l], deviance[l]});
  }
  fit.alpha_weights = alpha_weights;
  fit.gamma = 1.0;
  return fit;
}

ModelFit fit_lasso_path(std::span<const std::uint8_t> y, const DesignMatrix& x, const Eigen::VectorXd& alpha_weights,
                        const LassoOptions& options) {
  return fit_lasso_path(group_rows(x), y, alpha_weights, options);
}

ModelFit fit_lasso(const GroupedDesign& design, std::span<const std::uint8_t> y, const LassoOptions& options) {
  return fit_lasso_path(design, y, Eigen::VectorXd::Ones(design.rows.cols()), options);
}

ModelFit fit_lasso(std::span<const std::uint8_t> y, const DesignMatrix& x, const LassoOptions& options) {
  return fit_lasso(group_rows(x), y, options);
}

Eigen::VectorXd adaptive_weights(const Eigen::VectorXd& pilot) {
  Eigen::VectorXd out(pilot.size());
  for (Eigen::Index j = 0; j < pilot.size(); ++j) {
    if (!std::isfinite(pilot(j))) fail(ErrorCode::InvalidArgument, "non-finite pilot coefficient");
    out(j) = pilot(j) == 0.0 ? kExcluded : 1.0 / std::abs(pilot(j));
  }
  return out;
}

double ridge_pilot_penalty(const BinomialProblem& problem) {
  return 1e-3 * lambda_max(problem, Eigen::VectorXd::Ones(problem.x.cols()));
}

ModelFit fit_adaptive_lasso_with_pilot(const GroupedDesign& design, std::span<const std::uint8_t> y,
                                       const Eigen::VectorXd& pilot, double gamma, const LassoOptions& options) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) fail(ErrorCode::InvalidArgument, "gamma must be positive");
  const Eigen::VectorXd alpha = adaptive_weights(pilot);
  Eigen::VectorXd factors(alpha.size());
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    factors(j) = std::isfinite(alpha(j)) ? (gamma == 1.0 ? alpha(j) : std::pow(alpha(j), gamma)) : kExcluded;
    if (factors(j) == 0.0) factors(j) = std::numeric_limits<double>::min();
  }
  ModelFit fit = fit_lasso_path(design, y, factors, options);
  fit.alpha_weights = alpha;
  fit.gamma = gamma;
  return fit;
}

ModelFit fit_adaptive_lasso(const GroupedDesign& design, std::span<const std::uint8_t> y, double gamma,
                            const LassoOptions& options) {
  const BinomialProblem problem = aggregate(design, y);
  const Coefficients pilot = solve_logistic_ridge(problem, ridge_pilot_penalty(problem));
  return fit_adaptive_lasso_with_pilot(design, y, pilot.beta, gamma, options);
}

ModelFit fit_adaptive_lasso(std::span<const std::uint8_t> y, const DesignMatrix& x, double gamma,
                            const LassoOptions& options) {
  return fit_adaptive_lasso(group_rows(x), y, gamma, options);
}

}  // namespace skillcal

#include "skillcal/glm.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "skillcal/error.hpp"

namespace skillcal {

namespace {

// log(1 + e^eta) without overflow.
double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

Eigen::VectorXd linear_predictor(const BinomialProblem& problem, const Coefficients& coef) {
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(problem.x.rows(), coef.intercept);
  if (problem.x.cols() > 0) eta.noalias() += problem.x * coef.beta;
  return eta;
}

void check_problem(const BinomialProblem& problem) {
  if (problem.trials.size() != problem.x.rows() || problem.successes.size() != problem.x.rows()) {
    fail(ErrorCode::DimensionMismatch, "binomial problem sizes disagree");
  }
  const double n = problem.total_trials();
  if (!(n > 0.0)) fail(ErrorCode::InvalidArgument, "no observations");
  const double s = problem.successes.sum();
  if (s <= 0.0 || s >= n) fail(ErrorCode::OneClassOnly, "outcome has a single class");
}

ModelFit make_fit(const GroupedDesign& design, const Coefficients& coef) {
  ModelFit fit;
  fit.intercept = coef.intercept;
  fit.coefficients = coef.beta;
  fit.alpha_weights = Eigen::VectorXd::Ones(coef.beta.size());
  fit.column_labels = design.column_labels;
  fit.covariates = design.covariates;
  fit.reference_levels = design.reference_levels;
  return fit;
}

}  // namespace

GroupedDesign group_rows(const DesignMatrix& x) {
  if (!x.has_intercept || x.column_labels.empty() || !x.column_labels.front().intercept) {
    fail(ErrorCode::InvalidArgument, "model fitting needs a baseline-dropped design with an intercept");
  }
  GroupedDesign g;
  g.column_labels.assign(x.column_labels.begin() + 1, x.column_labels.end());
  g.covariates = x.covariates;
  g.reference_levels = x.reference_levels;
  const auto n = static_cast<std::size_t>(x.rows());
  const Eigen::Index p = x.cols() - 1;
  g.group_of_unit.resize(n);

  std::vector<Eigen::Index> first_row;
  if (x.row_cells.size() == n) {
    std::unordered_map<std::uint64_t, std::uint32_t> index;
    index.reserve(256);
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = index.try_emplace(x.row_cells[i], static_cast<std::uint32_t>(first_row.size()));
      if (inserted) first_row.push_back(static_cast<Eigen::Index>(i));
      g.group_of_unit[i] = it->second;
    }
  } else {
    std::map<std::vector<double>, std::uint32_t> index;
    std::vector<double> key(static_cast<std::size_t>(p));
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) key[static_cast<std::size_t>(j)] = x.values(static_cast<Eigen::Index>(i), j + 1);
      auto [it, inserted] = index.try_emplace(key, static_cast<std::uint32_t>(first_row.size()));
      if (inserted) first_row.push_back(static_cast<Eigen::Index>(i));
      g.group_of_unit[i] = it->second;
    }
  }
  g.rows.resize(static_cast<Eigen::Index>(first_row.size()), p);
  for (std::size_t r = 0; r < first_row.size(); ++r) {
    g.rows.row(static_cast<Eigen::Index>(r)) = x.values.row(first_row[r]).tail(p);
  }
  return g;
}

BinomialProblem aggregate(const GroupedDesign& design, std::span<const std::uint8_t> y) {
  if (y.size() != design.units()) fail(ErrorCode::DimensionMismatch, "outcome length differs from design rows");
  BinomialProblem prob;
  prob.x = design.rows;
  prob.trials = Eigen::VectorXd::Zero(design.rows.rows());
  prob.successes = Eigen::VectorXd::Zero(design.rows.rows());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > 1) fail(ErrorCode::BadSkillValue, "outcome must be 0/1");
    const auto g = static_cast<Eigen::Index>(design.group_of_unit[i]);
    prob.trials(g) += 1.0;
    prob.successes(g) += y[i];
  }
  return prob;
}

double mean_negative_loglik(const BinomialProblem& problem, const Coefficients& coef) {
  const Eigen::VectorXd eta = linear_predictor(problem, coef);
  double sum = 0.0;
  for (Eigen::Index g = 0; g < eta.size(); ++g) {
    if (problem.trials(g) == 0.0) continue;
    sum += problem.trials(g) * softplus(eta(g)) - problem.successes(g) * eta(g);
  }
  return sum / problem.total_trials();
}

Eigen::VectorXd mean_nll_gradient(const BinomialProblem& problem, const Coefficients& coef) {
  const Eigen::VectorXd eta = linear_predictor(problem, coef);
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index g = 0; g < eta.size(); ++g) {
    resid(g) = problem.trials(g) * inverse_logit(eta(g)) - problem.successes(g);
  }
  return problem.x.transpose() * resid / problem.total_trials();
}

// ---------------------------------------------------------------------------
// Newton-Raphson on the augmented design [1, X]
// ---------------------------------------------------------------------------

namespace {

struct NewtonSettings {
  double ridge = 0.0;          // (ridge/2)|beta|^2 added to the mean NLL
  double tolerance = 1e-8;     // gradient infinity norm
  bool scaled = false;         // tolerance on the mean (true) or summed (false) objective
  int max_iterations = 100;
  double separation_bound = std::numeric_limits<double>::infinity();
};

// Minimises mean NLL + ridge/2 |beta|^2 with step halving.
Coefficients newton(const BinomialProblem& problem, const NewtonSettings& s, int* iterations_out) {
  check_problem(problem);
  const Eigen::Index g_count = problem.x.rows();
  const Eigen::Index p = problem.x.cols();
  const double n = problem.total_trials();

  Eigen::MatrixXd z(g_count, p + 1);
  z.col(0).setOnes();
  z.rightCols(p) = problem.x;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  theta(0) = std::log(problem.successes.sum() / (n - problem.successes.sum()));

  auto objective = [&](const Eigen::VectorXd& t) {
    const Eigen::VectorXd eta = z * t;
    double sum = 0.0;
    for (Eigen::Index g = 0; g < g_count; ++g) {
      if (problem.trials(g) == 0.0) continue;
      sum += problem.trials(g) * softplus(eta(g)) - problem.successes(g) * eta(g);
    }
    return sum / n + 0.5 * s.ridge * t.tail(p).squaredNorm();
  };

  double current = objective(theta);
  for (int iter = 1; iter <= s.max_iterations; ++iter) {
    const Eigen::VectorXd eta = z * theta;
    Eigen::VectorXd resid(g_count);
    Eigen::VectorXd w(g_count);
    for (Eigen::Index g = 0; g < g_count; ++g) {
      const double mu = inverse_logit(eta(g));
      resid(g) = problem.successes(g) - problem.trials(g) * mu;
      w(g) = problem.trials(g) * mu * (1.0 - mu);
    }
    // Gradient of the log-likelihood (ascent direction) on the summed scale.
    Eigen::VectorXd grad = z.transpose() * resid;
    grad.tail(p) -= n * s.ridge * theta.tail(p);
    const double grad_norm = grad.cwiseAbs().maxCoeff() / (s.scaled ? n : 1.0);
    if (grad_norm <= s.tolerance) {
      if (iterations_out) *iterations_out = iter - 1;
      return Coefficients{theta(0), theta.tail(p)};
    }
    Eigen::MatrixXd info = z.transpose() * (z.array().colwise() * w.array()).matrix();
    info.diagonal().tail(p).array() += n * s.ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-300 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
      fail(ErrorCode::RankDeficient, "information matrix is singular");
    }
    const Eigen::VectorXd step = ldlt.solve(grad);
    double t = 1.0;
    Eigen::VectorXd candidate = theta + step;
    double value = objective(candidate);
    // Below rounding the objective cannot rank steps; take the full step.
    const double predicted = 0.5 * grad.dot(step) / n;
    if (predicted <= 1e-14 * std::max(1.0, std::abs(current))) value = std::min(value, current);
    int halvings = 0;
    while (!(value <= current) && halvings < 60) {
      t *= 0.5;
      candidate = theta + t * step;
      value = objective(candidate);
      ++halvings;
    }
    if (!(value <= current)) {
      // No further progress is representable; accept the current point.
      if (iterations_out) *iterations_out = iter;
      if (grad_norm <= 1e3 * s.tolerance) return Coefficients{theta(0), theta.tail(p)};
      fail(ErrorCode::NonConvergence, "Newton line search stalled");
    }
    theta = candidate;
    current = value;
    if (theta.cwiseAbs().maxCoeff() > s.separation_bound) {
      fail(ErrorCode::SeparationDetected, "a logistic coefficient exceeded " +
                                              std::to_string(s.separation_bound) + " in magnitude");
    }
  }
  fail(ErrorCode::NonConvergence, "Newton did not converge in " + std::to_string(s.max_iterations) + " iterations");
}

}  // namespace

Coefficients solve_logistic_mle(const BinomialProblem& problem, const MleOptions& options, int* iterations) {
  NewtonSettings s;
  s.tolerance = options.gradient_tolerance;
  s.max_iterations = options.max_iterations;
  s.separation_bound = options.separation_bound;
  return newton(problem, s, iterations);
}

ModelFit fit_logistic_mle(const GroupedDesign& design, std::span<const std::uint8_t> y, const MleOptions& options) {
  const BinomialProblem problem = aggregate(design, y);
  int iterations = 0;
  ModelFit fit = make_fit(design, solve_logistic_mle(problem, options, &iterations));
  fit.iterations = iterations;
  return fit;
}

ModelFit fit_logistic_mle(std::span<const std::uint8_t> y, const DesignMatrix& x, const MleOptions& options) {
  return fit_logistic_mle(group_rows(x), y, options);
}

Coefficients solve_logistic_ridge(const BinomialProblem& problem, double penalty) {
  if (!(penalty >= 0.0)) fail(ErrorCode::InvalidArgument, "ridge penalty must be non-negative");
  NewtonSettings s;
  s.ridge = penalty;
  s.tolerance = 1e-12;
  s.scaled = true;
  s.max_iterations = 200;
  return newton(problem, s, nullptr);
}

ModelFit fit_logistic_ridge(const GroupedDesign& design, std::span<const std::uint8_t> y, double penalty) {
  ModelFit fit = make_fit(design, solve_logistic_ridge(aggregate(design, y), penalty));
  fit.family_tag = "logistic";
  return fit;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

FittedMeans predict_means(const ModelFit& fit, const DesignMatrix& x) {
  if (!x.has_intercept || x.column_labels.size() != fit.column_labels.size() + 1 ||
      !std::equal(fit.column_labels.begin(), fit.column_labels.end(), x.column_labels.begin() + 1)) {
    fail(ErrorCode::ColumnMismatch, "design columns do not match the fitted model");
  }
  FittedMeans out;
  const Eigen::Index p = x.cols() - 1;
  const Eigen::VectorXd eta = (x.values.rightCols(p) * fit.coefficients).array() + fit.intercept;
  out.values = eta.unaryExpr([](double e) { return inverse_logit(e); });

  // Decode each row back to its category codes.
  std::vector<std::pair<std::size_t, std::size_t>> blocks;  // [start, end) within non-intercept labels
  for (Covariate c : fit.covariates) {
    std::size_t start = fit.column_labels.size();
    std::size_t end = start;
    for (std::size_t j = 0; j < fit.column_labels.size(); ++j) {
      if (fit.column_labels[j].covariate == c) {
        start = std::min(start, j);
        end = j + 1;
      }
    }
    if (start == fit.column_labels.size()) start = end = 0;
    blocks.emplace_back(start, end);
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    CellKey key;
    for (std::size_t b = 0; b < fit.covariates.size(); ++b) {
      const Covariate c = fit.covariates[b];
      auto ref = fit.reference_levels.find(c);
      std::string code = ref != fit.reference_levels.end() ? ref->second : std::string();
      for (std::size_t j = blocks[b].first; j < blocks[b].second; ++j) {
        if (x.values(i, static_cast<Eigen::Index>(j) + 1) != 0.0) {
          code = fit.column_labels[j].category;
          break;
        }
      }
      key.push_back(std::move(code));
    }
    out.by_cell.emplace(std::move(key), out.values(i));
  }
  return out;
}

double predict_cell(const ModelFit& fit, const CellKey& cell) {
  if (cell.size() != fit.covariates.size()) fail(ErrorCode::DimensionMismatch, "cell key length differs from covariates");
  double eta = fit.intercept;
  for (std::size_t b = 0; b < cell.size(); ++b) {
    const Covariate c = fit.covariates[b];
    auto ref = fit.reference_levels.find(c);
    if (ref != fit.reference_levels.end() && ref->second == cell[b]) continue;
    bool found = false;
    for (std::size_t j = 0; j < fit.column_labels.size(); ++j) {
      const auto& label = fit.column_labels[j];
      if (!label.intercept && label.covariate == c && label.category == cell[b]) {
        eta += fit.coefficients(static_cast<Eigen::Index>(j));
        found = true;
        break;
      }
    }
    if (!found) {
      fail(ErrorCode::UncoveredCell, std::string(covariate_name(c)) + " category '" + cell[b] +
                                         "' is not covered by the model");
    }
  }
  return inverse_logit(eta);
}

Eigen::VectorXd group_linear_predictor(const ModelFit& fit, const GroupedDesign& design) {
  if (design.column_labels != fit.column_labels) fail(ErrorCode::ColumnMismatch, "grouped design differs from model");
  return (design.rows * fit.coefficients).array() + fit.intercept;
}

}  // namespace skillcal

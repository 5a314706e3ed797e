#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace oracle {

Eigen::VectorXd chi2_qp(const Eigen::VectorXd& d, const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + p, n + p);
  for (Eigen::Index i = 0; i < n; ++i) k(i, i) = 2.0 / d(i);
  k.topRightCorner(n, p) = x;
  k.bottomLeftCorner(p, n) = x.transpose();
  Eigen::VectorXd rhs(n + p);
  rhs.head(n).setConstant(2.0);
  rhs.tail(p) = t;
  const Eigen::VectorXd sol = k.fullPivLu().solve(rhs);
  return sol.head(n);
}

Eigen::VectorXd chi2_nullspace(const Eigen::VectorXd& d, const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
  const Eigen::Index n = x.rows();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  const Eigen::Index r = qr.rank();
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd z = q.rightCols(n - r);
  const Eigen::VectorXd w0 = x.transpose().completeOrthogonalDecomposition().solve(t);
  const Eigen::VectorXd dinv = d.cwiseInverse();
  const Eigen::MatrixXd a = z.transpose() * dinv.asDiagonal() * z;
  const Eigen::VectorXd b = z.transpose() * dinv.asDiagonal() * (d - w0);
  return w0 + z * a.ldlt().solve(b);
}

double loglik(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, const Eigen::VectorXd& beta) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double eta = x.row(i).dot(beta);
    const double log1pe = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    ll += (y[static_cast<std::size_t>(i)] ? eta : 0.0) - log1pe;
  }
  return ll;
}

Eigen::VectorXd brute_force_logistic(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y, double half_width,
                                     int rounds) {
  const Eigen::Index p = x.cols();
  Eigen::VectorXd best = Eigen::VectorXd::Zero(p);
  // Coarse grid over the box, one coordinate at a time.
  const int steps = 200;
  for (int pass = 0; pass < 3; ++pass) {
    for (Eigen::Index j = 0; j < p; ++j) {
      double best_v = loglik(x, y, best), best_b = best(j);
      for (int s = 0; s <= steps; ++s) {
        Eigen::VectorXd b = best;
        b(j) = -half_width + 2.0 * half_width * s / steps;
        const double v = loglik(x, y, b);
        if (v > best_v) best_v = v, best_b = b(j);
      }
      best(j) = best_b;
    }
  }
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double width = 2.0 * half_width / steps;
  for (int r = 0; r < rounds; ++r) {
    for (Eigen::Index j = 0; j < p; ++j) {
      double lo = best(j) - width, hi = best(j) + width;
      auto f = [&](double v) {
        Eigen::VectorXd b = best;
        b(j) = v;
        return loglik(x, y, b);
      };
      double c = hi - phi * (hi - lo), dd = lo + phi * (hi - lo);
      double fc = f(c), fd = f(dd);
      for (int it = 0; it < 80; ++it) {
        if (fc > fd) {
          hi = dd, dd = c, fd = fc;
          c = hi - phi * (hi - lo), fc = f(c);
        } else {
          lo = c, c = dd, fc = fd;
          dd = lo + phi * (hi - lo), fd = f(dd);
        }
      }
      best(j) = 0.5 * (lo + hi);
    }
    width = std::max(width * 0.7, 1e-3);
  }
  return best;
}

double auc_pairs(std::span<const std::uint8_t> y, std::span<const double> scores) {
  double hits = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) hits += 1.0;
      else if (scores[i] == scores[j]) hits += 0.5;
    }
  }
  return hits / pairs;
}

double cramers_v_definition(const std::vector<std::vector<double>>& table) {
  const std::size_t r = table.size(), c = table.front().size();
  std::vector<double> rs(r, 0.0), cs(c, 0.0);
  double n = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      rs[i] += table[i][j];
      cs[j] += table[i][j];
      n += table[i][j];
    }
  }
  double chi2 = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double e = rs[i] * cs[j] / n;
      if (e > 0) chi2 += (table[i][j] - e) * (table[i][j] - e) / e;
    }
  }
  return std::sqrt(chi2 / (n * static_cast<double>(std::min(r, c) - 1)));
}

skillcal::AdSample random_sample(std::mt19937_64& rng, std::size_t n, std::array<std::size_t, 3> levels,
                                 std::size_t skills, skillcal::Wave wave) {
  skillcal::AdSample s;
  for (std::size_t k = 0; k < skills; ++k) s.catalog.names.push_back("s" + std::to_string(k));
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<std::string> codes;
    for (std::size_t j = 0; j < levels[c]; ++j) codes.push_back(std::to_string(j + 1));
    s.dictionaries[c] = skillcal::CategoryDictionary(codes);
  }
  std::bernoulli_distribution coin(0.4);
  for (std::size_t i = 0; i < n; ++i) {
    skillcal::AdRecord r;
    r.wave = wave;
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t v = i < levels[c] ? i : std::uniform_int_distribution<std::size_t>(0, levels[c] - 1)(rng);
      r.covariates[c] = static_cast<skillcal::CategoryIndex>(v);
    }
    for (std::size_t k = 0; k < skills; ++k) r.skills.push_back(coin(rng) ? 1 : 0);
    s.records.push_back(std::move(r));
  }
  return s;
}

}  // namespace oracle

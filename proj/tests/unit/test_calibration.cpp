#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "skillcal/calibration.hpp"
#include "skillcal/error.hpp"

using namespace skillcal;

namespace {

// Random calibration instance: one-hot block plus a positive continuous column.
struct Instance {
  WeightVector d;
  Eigen::MatrixXd x;
  Eigen::VectorXd t;
};

Instance random_instance(std::mt19937_64& rng, int n, int k) {
  std::uniform_real_distribution<double> u(0.5, 3.0);
  std::uniform_int_distribution<int> cat(0, k - 1);
  Instance in;
  in.d.values.resize(n);
  in.x = Eigen::MatrixXd::Zero(n, k + 1);
  for (int i = 0; i < n; ++i) {
    in.d.values(i) = u(rng);
    in.x(i, i < k ? i : cat(rng)) = 1.0;
    in.x(i, k) = u(rng);
  }
  const Eigen::VectorXd base = in.x.transpose() * in.d.values;
  in.t = base.cwiseProduct(Eigen::VectorXd::NullaryExpr(k + 1, [&] { return 0.8 + 0.4 * u(rng) / 3.0; }));
  return in;
}

}  // namespace

TEST_CASE("pseudo weights") {
  const WeightVector w = pseudo_weights(10, 100.0);
  CHECK(w.size() == 10);
  CHECK((w.values.array() == 10.0).all());
  CHECK(pseudo_weights(1, 1.0).values(0) == 1.0);
  const WeightVector c = pseudo_weights(13618, 71775.0);
  CHECK(c.values(0) == doctest::Approx(5.2706).epsilon(1e-4));
  CHECK(c.basis == WeightBasis::pseudo_design);
}

TEST_CASE("calibrating to d'X returns d") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Instance in = random_instance(rng, 30, 4);
    const Eigen::VectorXd t = in.x.transpose() * in.d.values;
    const WeightVector w = calibrate_chi2(in.d, in.x, t);
    CHECK((w.values - in.d.values).cwiseAbs().maxCoeff() <= 1e-12 * in.d.values.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("intercept-only calibration rescales") {
  const WeightVector d = pseudo_weights(8, 80.0);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(8, 1);
  const WeightVector w = calibrate_chi2(d, x, Eigen::VectorXd::Constant(1, 120.0));
  for (Eigen::Index i = 0; i < 8; ++i) CHECK(w.values(i) == doctest::Approx(15.0).epsilon(1e-14));
  CHECK(w.basis == WeightBasis::greg);
}

TEST_CASE("chi-square calibration matches the constrained least-squares oracles") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    Instance in = random_instance(rng, 50, 3);
    const WeightVector w = calibrate_chi2(in.d, in.x, in.t);
    const Eigen::VectorXd qp = oracle::chi2_qp(in.d.values, in.x, in.t);
    const Eigen::VectorXd ns = oracle::chi2_nullspace(in.d.values, in.x, in.t);
    CHECK((w.values - qp).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((w.values - ns).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(max_constraint_error(w.values, in.x, in.t) <= 1e-8);
    CHECK(chi2_distance(w.values, in.d.values) <= chi2_distance(qp, in.d.values) + 1e-8);
  }
}

TEST_CASE("scale equivariance") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    Instance in = random_instance(rng, 25, 3);
    const double c = 0.1 + trial;
    WeightVector scaled = in.d;
    scaled.values *= c;
    const WeightVector w = calibrate_chi2(in.d, in.x, in.t);
    const WeightVector ws = calibrate_chi2(scaled, in.x, c * in.t);
    CHECK((ws.values - c * w.values).cwiseAbs().maxCoeff() <= 1e-9 * c * w.values.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("calibration errors") {
  const WeightVector d = pseudo_weights(4, 4.0);
  Eigen::MatrixXd x(4, 2);
  x << 1, 1, 1, 1, 1, 1, 1, 1;
  CHECK_THROWS_WITH_AS(calibrate_chi2(d, x, Eigen::Vector2d(5, 5)), doctest::Contains("RankDeficient"), Error);
  CHECK_THROWS_WITH_AS(calibrate_chi2(d, x, Eigen::Vector3d(4, 4, 4)), doctest::Contains("DimensionMismatch"), Error);
}

TEST_CASE("negative weights are kept and counted") {
  WeightVector d = pseudo_weights(4, 4.0);
  Eigen::MatrixXd x(4, 2);
  x << 1, 0, 1, 0, 1, 1, 1, 0;
  const WeightVector w = calibrate_chi2(d, x, Eigen::Vector2d(4.0, 3.9));
  CHECK(w.negative_count() == 0);
  const WeightVector neg = calibrate_chi2(d, x, Eigen::Vector2d(4.0, -1.0));
  CHECK(neg.negative_count() >= 1);
  CHECK(max_constraint_error(neg.values, x, Eigen::Vector2d(4.0, -1.0)) <= 1e-8);
}

TEST_CASE("model-assisted calibration") {
  SUBCASE("constant fitted means fall back to rescaling") {
    const WeightVector d = pseudo_weights(5, 50.0);
    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(5, 0.3);
    const WeightVector w = calibrate_model_assisted(d, mu, 70.0, 0.3 * 70.0);
    CHECK(w.degenerate_model);
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(w.values(i) == doctest::Approx(14.0));
  }
  SUBCASE("constraints and oracle") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int trial = 0; trial < 30; ++trial) {
      const WeightVector d = pseudo_weights(50, 500.0);
      const Eigen::VectorXd mu = Eigen::VectorXd::NullaryExpr(50, [&] { return u(rng); });
      const double n_hat = 480.0 + trial, t_mu = 0.9 * mu.mean() * n_hat;
      const WeightVector w = calibrate_model_assisted(d, mu, n_hat, t_mu);
      CHECK(w.basis == WeightBasis::model_calibrated);
      CHECK(std::abs(w.sum() - n_hat) <= 1e-8 * n_hat);
      CHECK(std::abs(w.values.dot(mu) - t_mu) <= 1e-8 * t_mu);
      Eigen::MatrixXd m(50, 2);
      m.col(0).setOnes();
      m.col(1) = mu;
      const Eigen::VectorXd qp = oracle::chi2_qp(d.values, m, Eigen::Vector2d(n_hat, t_mu));
      CHECK((w.values - qp).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

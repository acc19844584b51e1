#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sfpl/errors.hpp"
#include "sfpl/penalty.hpp"

using namespace sfpl;

namespace {

double smooth_abs(double t, double eps) { return std::abs(t) - eps * std::log1p(std::abs(t) / eps); }

CoefficientSet random_b(std::mt19937_64& rng, int k, int p, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  CoefficientSet b(k, p);
  for (int a = 0; a < k; ++a)
    for (int q = 0; q < p; ++q) b(a, q) = d(rng);
  return b;
}

}  // namespace

TEST_CASE("penalty value examples") {
  Eigen::MatrixXd m(2, 2);
  m << 1, -2, 1, 0;
  const CoefficientSet b(m);
  PenaltyConfig cfg;
  CHECK(penalty_value(b, cfg) == 0.0);
  cfg.lambda_s = 0.5;
  cfg.lambda_f = 1.0;
  CHECK(penalty_value(b, cfg) == doctest::Approx(4.0));
  cfg.tau = Eigen::MatrixXd::Ones(2, 2);
  CHECK(penalty_value(b, cfg) == doctest::Approx(4.0));
  cfg.tau(0, 1) = cfg.tau(1, 0) = 3.0;
  CHECK(penalty_value(b, cfg) == doctest::Approx(2.0 + 6.0));

  PenaltyConfig fuse_only;
  fuse_only.lambda_f = 7.0;
  CHECK(penalty_value(CoefficientSet(Eigen::MatrixXd::Constant(1, 3, 2.0)), fuse_only) == 0.0);
}

TEST_CASE("config validation") {
  PenaltyConfig cfg;
  cfg.lambda_s = -1.0;
  CHECK_THROWS_AS(cfg.validate(2), ValidationError);
  cfg.lambda_s = 0.0;
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(2), ValidationError);
  cfg.epsilon = 1e-5;
  cfg.tau = Eigen::MatrixXd::Ones(3, 3);
  CHECK_THROWS_AS(cfg.validate(2), ValidationError);
  cfg.tau = Eigen::MatrixXd::Ones(2, 2);
  cfg.tau(0, 1) = 2.0;
  CHECK_THROWS_AS(cfg.validate(2), ValidationError);
  cfg.tau(0, 1) = cfg.tau(1, 0) = -1.0;
  CHECK_THROWS_AS(cfg.validate(2), ValidationError);
  cfg.tau(0, 1) = cfg.tau(1, 0) = 0.5;
  CHECK_NOTHROW(cfg.validate(2));
  cfg.lambda_f = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(cfg.validate(2), ValidationError);
}

TEST_CASE("smoothed penalty evaluates the epsilon-log form") {
  std::mt19937_64 rng(2);
  const CoefficientSet b = random_b(rng, 3, 4, 1.0);
  PenaltyConfig cfg;
  cfg.lambda_s = 0.8;
  cfg.lambda_f = 1.7;
  cfg.epsilon = 1e-3;
  double expected = 0.0;
  for (int k = 0; k < 3; ++k) {
    for (int q = 0; q < 4; ++q) {
      expected += cfg.lambda_s * smooth_abs(b(k, q), cfg.epsilon);
      for (int k2 = k + 1; k2 < 3; ++k2) expected += cfg.lambda_f * smooth_abs(b(k, q) - b(k2, q), cfg.epsilon);
    }
  }
  CHECK(smoothed_penalty_value(b, cfg) == doctest::Approx(expected).epsilon(1e-13));
  CHECK(smoothed_penalty_value(b, cfg) <= penalty_value(b, cfg));
}

TEST_CASE("V_s: diagonal, positive, 1/(|b|+eps)") {
  CoefficientSet b(1, 2);
  b(0, 1) = 1.0;
  PenaltyConfig cfg;
  const Eigen::MatrixXd vs = build_vs(b, cfg);
  CHECK(vs(0, 0) == doctest::Approx(1e5));
  CHECK(vs(1, 1) == doctest::Approx(1.0 / (1.0 + 1e-5)));
  CHECK(vs(0, 1) == 0.0);
  CHECK(vs_diagonal(b, cfg).minCoeff() > 0.0);
}

TEST_CASE("V_f: Laplacian structure") {
  PenaltyConfig cfg;
  CHECK(build_vf(CoefficientSet(1, 3), cfg).cwiseAbs().maxCoeff() == 0.0);

  const CoefficientSet fused(Eigen::MatrixXd::Constant(2, 1, 0.4));
  const Eigen::MatrixXd v = build_vf(fused, cfg);
  CHECK(v(0, 0) == doctest::Approx(1e5));
  CHECK(v(0, 1) == doctest::Approx(-1e5));
  CHECK(v(1, 0) == v(0, 1));

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const CoefficientSet b = random_b(rng, 4, 3, 1.0);
    cfg.tau = Eigen::MatrixXd::Random(4, 4).cwiseAbs();
    cfg.tau = (cfg.tau + cfg.tau.transpose()).eval();
    const Eigen::MatrixXd vf = build_vf(b, cfg);
    CHECK((vf - vf.transpose()).norm() == 0.0);
    CHECK(vf.rowwise().sum().cwiseAbs().maxCoeff() < 1e-9 * vf.cwiseAbs().maxCoeff());
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(vf).eigenvalues().minCoeff() >= -1e-9 * vf.norm());
    // entries only couple the same variable across groups
    for (int r = 0; r < 12; ++r)
      for (int c = 0; c < 12; ++c)
        if (r % 3 != c % 3) CHECK(vf(r, c) == 0.0);
  }
}

TEST_CASE("surrogate: off when lambdas are zero, touches and majorizes the smoothed objective") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lam(0.0, 10.0);
  auto inst = oracle::random_instance(rng, 3, 10, 3, 4, 12);
  PenaltyConfig off;
  CHECK(surrogate_value(inst.truth, random_b(rng, 3, 4, 1.0), off) == 0.0);

  for (int trial = 0; trial < 1000; ++trial) {
    PenaltyConfig cfg;
    cfg.lambda_s = lam(rng);
    cfg.lambda_f = lam(rng);
    const CoefficientSet bh = random_b(rng, 3, 4, trial % 2 ? 1.0 : 1e-3);
    const CoefficientSet b = random_b(rng, 3, 4, 1.0);
    const double touch = surrogate_objective(bh, bh, inst.data, inst.x, cfg);
    CHECK(std::abs(touch - smoothed_objective(bh, inst.data, inst.x, cfg)) <= 1e-9 * std::max(1.0, std::abs(touch)));
    CHECK(surrogate_objective(b, bh, inst.data, inst.x, cfg) >= smoothed_objective(b, inst.data, inst.x, cfg) - 1e-9);
  }
}

TEST_CASE("objectives compose") {
  std::mt19937_64 rng(9);
  auto inst = oracle::random_instance(rng, 2, 9, 3, 3, 10);
  PenaltyConfig cfg;
  CHECK(penalized_objective(inst.truth, inst.data, inst.x, cfg) == neg_log_likelihood(inst.truth, inst.data, inst.x));
  cfg.lambda_s = 1.3;
  cfg.lambda_f = 0.4;
  const double expect = oracle::nll(inst.truth, inst.data, inst.x.values()) + penalty_value(inst.truth, cfg);
  CHECK(std::abs(penalized_objective(inst.truth, inst.data, inst.x, cfg) - expect) < 1e-12 * std::abs(expect));
  const CoefficientSet zero(2, 3);
  CHECK(penalized_objective(zero, inst.data, inst.x, cfg) == neg_log_likelihood(zero, inst.data, inst.x));
}

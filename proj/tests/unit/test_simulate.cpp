#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "fjm/error.hpp"
#include "fjm/simulate.hpp"

using namespace fjm;

TEST(CaseTwo, Constants) {
  const SimSpec s = case2_spec();
  EXPECT_EQ(s.n, 800);
  EXPECT_EQ(s.J(), 2);
  EXPECT_NEAR(s.sigma2(0), 0.75, 1e-15);
  EXPECT_NEAR(s.sigma2(1), 0.75, 1e-15);
  EXPECT_LT(orthonormality_error(s.phi, 1.0), 1e-6);
  EXPECT_LT(orthonormality_error(s.psi, 1.0), 1e-6);
  EXPECT_EQ(s.gamma_eta().size(), 6);
}

TEST(CaseOne, ConstantsAndBundle) {
  const SimSpec s = case1_spec();
  EXPECT_EQ(s.n, 803);
  EXPECT_NEAR(s.d0(0), 95.41, 1e-12);
  EXPECT_NEAR(s.d0(1), 5.04, 1e-12);
  EXPECT_NEAR(s.beta(1), -1.44, 1e-12);
  ASSERT_EQ(s.gamma1.size(), 2u);
  EXPECT_NEAR(s.gamma1[1](0), 0.25, 1e-12);
  EXPECT_NEAR(s.gamma1[1](1), 0.80, 1e-12);
  EXPECT_NEAR(s.gamma0(0), 0.33, 1e-12);
  EXPECT_NEAR(s.gamma0(1), 0.31, 1e-12);
  EXPECT_LT(orthonormality_error(s.phi, 1.0), 1e-6);
  EXPECT_LT(orthonormality_error(s.psi, 1.0), 1e-6);
}

TEST(CaseOne, MissingBundle) {
  try {
    case1_spec(10, 1, "/nonexistent/bundle.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingCoefficientBundle);
  }
}

TEST(Generate, UnitExponentialEventTimes) {
  SimSpec s = case2_spec(100000, 5);
  s.grid = {0.0};
  s.gamma0.setZero();
  for (auto& g : s.gamma1) g.setZero();
  s.h0 = 1.0;
  s.tau = std::numeric_limits<double>::infinity();
  s.c0 = std::numeric_limits<double>::infinity();
  const SimData d = generate(s);
  double mean = 0.0;
  for (double t : d.truth.event_time) mean += t;
  mean /= s.n;
  EXPECT_NEAR(mean, 1.0, 0.01);
  EXPECT_EQ(d.truth.censoring_rate, 0.0);
}

TEST(Generate, DeterministicAndTruncated) {
  const SimSpec s = case2_spec(200, 8);
  const SimData a = generate(s), b = generate(s);
  ASSERT_EQ(a.joined.n(), 200);
  for (int i = 0; i < 200; ++i) {
    EXPECT_EQ(a.joined.subjects[i].values, b.joined.subjects[i].values);
    EXPECT_EQ(a.joined.subjects[i].T, b.joined.subjects[i].T);
    for (double t : a.joined.subjects[i].times) EXPECT_LE(t, a.joined.subjects[i].T);
    EXPECT_LE(a.joined.subjects[i].T, s.tau);
  }
  const SimData c = generate(case2_spec(200, 9));
  EXPECT_NE(a.joined.subjects[0].T, c.joined.subjects[0].T);
}

TEST(Calibration, ZeroTargetIsUnachievable) {
  try {
    calibrate_censoring(case2_spec(10, 1), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Unachievable);
  }
  try {
    calibrate_censoring(case2_spec(10, 1), 0.05);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Unachievable);
  }
}

TEST(Calibration, LongerFollowUpLowersCensoring) {
  const SimSpec s = case2_spec(10, 1);
  double prev = 1.0;
  for (double c0 : {0.1, 0.5, 1.0, 2.0, 10.0}) {
    const double r = censoring_rate(s, c0, 20000);
    EXPECT_LE(r, prev) << c0;
    prev = r;
  }
}

TEST(Calibration, CaseTwoRateHoldsOnFreshDraws) {
  const SimSpec s = case2_spec(800, 1);
  SimSpec fresh = s;
  fresh.seed = 4242;
  EXPECT_NEAR(censoring_rate(fresh, s.c0), 0.30, 0.02);
}

TEST(Conversion, ParamsRoundTrip) {
  const SimSpec s = case2_spec(100, 3);
  const ModelParams p = params_from_spec(s, BasisConfig{});
  EXPECT_LT((p.d0 - s.d0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((p.theta0.transpose() * p.theta0 - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
  const SimSpec back = spec_from_params(p, s.grid, 100, 3, 1.8);
  EXPECT_EQ(back.J(), 2);
  EXPECT_EQ(back.h0, 1.8);
  for (double t : {0.1, 0.45, 0.9}) {
    EXPECT_NEAR(back.mu[0](t), s.mu[0](t), 0.05) << t;
    EXPECT_NEAR(std::abs(back.phi[0](t)), std::abs(s.phi[0](t)), 0.05) << t;
  }
  EXPECT_LT(orthonormality_error(back.phi, 1.0), 1e-8);
}

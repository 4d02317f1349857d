#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <omp.h>

#include "fjm/estep.hpp"
#include "fjm/simulate.hpp"
#include "helpers.hpp"

using namespace fjm;
using fjm::testing::make_subject;
using fjm::testing::mean_values;
using fjm::testing::random_params;
using fjm::testing::step_hazard;

namespace {

struct Fixture {
  ModelParams p;
  std::vector<SubjectView> subjects;
  std::vector<SubjectDesign> designs;
};

Fixture small_fixture(std::uint64_t seed, bool with_gamma) {
  std::mt19937_64 rng(seed);
  Fixture f;
  f.p = random_params(2, 2, 1, 1, rng);
  std::normal_distribution<double> g;
  std::vector<double> event_times;
  for (int i = 0; i < 12; ++i) {
    std::vector<double> t = {0.0, 0.25, 0.5};
    Eigen::MatrixXd v = mean_values(f.p, t);
    for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] += g(rng);
    const double T = 0.55 + 0.03 * i;
    const int delta = i % 3 ? 1 : 0;
    if (delta) event_times.push_back(T);
    f.subjects.push_back(make_subject(t, v, T, delta, Eigen::VectorXd::Constant(1, g(rng)), i + 1));
    f.subjects.back().index = i;
  }
  f.p.h0 = step_hazard(event_times, 0.2);
  if (with_gamma) {
    f.p.cox.gamma_eta << 0.8, -0.5, 0.3, 0.4;
    f.p.cox.gamma_z << 0.2;
  }
  f.designs = build_designs(f.subjects, OrthonormalBasis(f.p.basis));
  return f;
}

}  // namespace

TEST(EStep, NoHazardCouplingReducesToGaussianConditioning) {
  const Fixture f = small_fixture(1, false);
  EStepOptions o;
  o.Q = 10000;
  o.seed = 3;
  const PosteriorMoments pm = e_step(f.subjects, f.designs, f.p, o);
  for (int i = 0; i < static_cast<int>(f.subjects.size()); ++i) {
    const GaussianConditional c = conditional_moments(f.subjects[i], f.designs[i], f.p);
    const SubjectPosterior& s = pm.subjects[i];
    EXPECT_NEAR(s.ess, o.Q, 1e-6 * o.Q);
    for (int k = 0; k < f.p.K(); ++k) {
      const double v = c.cov(k, k);
      EXPECT_LT(std::abs(s.Eb(k) - c.mean(k)), 3.0 * std::sqrt(v / o.Q)) << i << "," << k;
      const double second = v + c.mean(k) * c.mean(k);
      const double sd2 = std::sqrt((2.0 * v * v + 4.0 * c.mean(k) * c.mean(k) * v) / o.Q);
      EXPECT_LT(std::abs(s.Ebb(k, k) - second), 3.0 * sd2) << i << "," << k;
    }
  }
}

TEST(EStep, SingleDrawCarriesAllWeight) {
  const Fixture f = small_fixture(2, true);
  const GaussianConditional c = conditional_moments(f.subjects[1], f.designs[1], f.p);
  const WeightInputs wi = weight_inputs(f.subjects[1], f.p);
  const StreamKey key{9, 1, 1, StreamTag::EStep};
  Eigen::MatrixXd sample;
  const SubjectPosterior r = estep_subject_reference(c, wi, f.p.cox.gamma_eta, 1, key, &sample);
  const SubjectPosterior s = estep_subject(c, wi, f.p.cox.gamma_eta, 1, key);
  EXPECT_DOUBLE_EQ(s.ess, 1.0);
  EXPECT_LT((r.Eb - sample.col(0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((s.Eb - sample.col(0)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((s.Ebb - sample.col(0) * sample.col(0).transpose()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EStep, WeightsFollowTheSurvivalLikelihood) {
  const Fixture f = small_fixture(3, true);
  const int i = 2;
  const GaussianConditional c = conditional_moments(f.subjects[i], f.designs[i], f.p);
  const WeightInputs wi = weight_inputs(f.subjects[i], f.p);
  EXPECT_NEAR(wi.hez, f.p.h0.cumulative(f.subjects[i].T) * std::exp(f.subjects[i].z(0) * 0.2), 1e-15);
  Eigen::MatrixXd b;
  Eigen::VectorXd lw;
  estep_subject_reference(c, wi, f.p.cox.gamma_eta, 200, StreamKey{1, 1, 1, StreamTag::EStep}, &b, &lw);
  const double lw0 = wi.delta * b.col(0).dot(f.p.cox.gamma_eta) - wi.hez * std::exp(b.col(0).dot(f.p.cox.gamma_eta));
  for (int q = 1; q < 200; ++q) {
    const double s = b.col(q).dot(f.p.cox.gamma_eta);
    EXPECT_NEAR(lw(q) - lw(0), wi.delta * s - wi.hez * std::exp(s) - lw0, 1e-10);
  }
}

TEST(EStep, ExplicitSampleMoments) {
  Eigen::MatrixXd b(2, 3);
  b << 1, 2, 4, 0, -1, 1;
  const Eigen::Vector3d logw(std::log(1.0), std::log(2.0), std::log(1.0));
  const Eigen::Vector2d gamma(0.5, 0.0);
  const SubjectPosterior s = moments_from_sample(b, logw, gamma);
  const Eigen::Vector2d Eb = (1.0 * b.col(0) + 2.0 * b.col(1) + 1.0 * b.col(2)) / 4.0;
  EXPECT_LT((s.Eb - Eb).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(s.ess, 16.0 / 6.0, 1e-12);
  const double Ees = (std::exp(0.5) + 2.0 * std::exp(1.0) + std::exp(2.0)) / 4.0;
  EXPECT_NEAR(s.tilt.Ees, Ees, 1e-12);
}

TEST(EStep, TiltRecomputedFromTheFrozenSample) {
  const Fixture f = small_fixture(8, true);
  const GaussianConditional c = conditional_moments(f.subjects[0], f.designs[0], f.p);
  Eigen::MatrixXd b;
  Eigen::VectorXd lw;
  const SubjectPosterior s = estep_subject_reference(c, weight_inputs(f.subjects[0], f.p), f.p.cox.gamma_eta, 400,
                                                     StreamKey{2, 1, 0, StreamTag::EStep}, &b, &lw);
  const Eigen::VectorXd other = Eigen::VectorXd::LinSpaced(f.p.K(), 0.2, -0.3);
  double W = 0.0, E = 0.0;
  for (int q = 0; q < b.cols(); ++q) {
    const double w = std::exp(lw(q) - lw.maxCoeff());
    W += w;
    E += w * std::exp(b.col(q).dot(other));
  }
  // the frozen sample is stored in single precision
  EXPECT_NEAR(tilt_moments(s, other).Ees, E / W, 1e-5 * E / W);
}

TEST(EStep, FastKernelMatchesReference) {
  const Fixture f = small_fixture(4, true);
  EStepOptions o;
  o.Q = 2000;
  o.seed = 5;
  o.iteration = 3;
  const PosteriorMoments fast = e_step(f.subjects, f.designs, f.p, o);
  o.reference = true;
  const PosteriorMoments ref = e_step(f.subjects, f.designs, f.p, o);
  for (int i = 0; i < fast.n(); ++i) {
    EXPECT_LT((fast.subjects[i].Eb - ref.subjects[i].Eb).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((fast.subjects[i].Ebb - ref.subjects[i].Ebb).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(fast.subjects[i].tilt.Ees, ref.subjects[i].tilt.Ees, 1e-9);
    EXPECT_NEAR(fast.subjects[i].ess, ref.subjects[i].ess, 1e-6);
  }
}

TEST(EStep, ThreadCountDoesNotChangeResults) {
  const Fixture f = small_fixture(5, true);
  EStepOptions o;
  o.Q = 500;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const PosteriorMoments one = e_step(f.subjects, f.designs, f.p, o);
  omp_set_num_threads(4);
  const PosteriorMoments four = e_step(f.subjects, f.designs, f.p, o);
  omp_set_num_threads(saved);
  for (int i = 0; i < one.n(); ++i) {
    EXPECT_EQ(one.subjects[i].Eb, four.subjects[i].Eb);
    EXPECT_EQ(one.subjects[i].Ebb, four.subjects[i].Ebb);
  }
}

TEST(EStep, TwoSeedsAgreeOnCaseTwoSubject) {
  const SimSpec spec = case2_spec(50, 3);
  const SimData d = generate(spec);
  ModelParams p = params_from_spec(spec, BasisConfig{});
  const std::vector<SubjectView> one = {d.joined.subjects[0]};
  p.h0 = step_hazard({one[0].T}, spec.h0 * one[0].T);
  const auto designs = build_designs(one, OrthonormalBasis(p.basis));
  EStepOptions o;
  o.Q = 10000;
  o.seed = 1;
  const SubjectPosterior a = e_step(one, designs, p, o).subjects[0];
  o.seed = 2;
  const SubjectPosterior b = e_step(one, designs, p, o).subjects[0];
  for (int k = 0; k < p.K(); ++k) {
    const double var = std::max(a.Ebb(k, k) - a.Eb(k) * a.Eb(k), 1e-12);
    const double se = std::sqrt(var / a.ess + var / b.ess);
    EXPECT_LT(std::abs(a.Eb(k) - b.Eb(k)), 4.0 * se) << k;
  }
}

TEST(MarginalLikelihood, NoLatentVariabilityIsExact) {
  std::mt19937_64 rng(6);
  ModelParams p = random_params(2, 1, 1, 1, rng);
  p.d0.setZero();
  p.d1.setZero();
  p.cox.gamma_z << 0.4;
  p.cox.gamma_eta << 0.3, 0.1, -0.2;
  const std::vector<double> t = {0.1, 0.6};
  Eigen::MatrixXd v = mean_values(p, t);
  v(0, 0) += 0.5;
  v(1, 1) -= 1.0;
  const SubjectView s = make_subject(t, v, 0.7, 1, Eigen::VectorXd::Constant(1, 1.5));
  p.h0 = step_hazard({0.3, 0.7}, 0.6);
  const auto designs = build_designs({s}, OrthonormalBasis(p.basis));
  const MarginalLikelihood ml = marginal_loglik({s}, designs, p, 1000, 4);

  double normal = 0.0;
  const double r[4] = {0.5, 0.0, 0.0, -1.0};
  for (int k = 0; k < 4; ++k) {
    const double s2 = p.sigma2(k / 2);
    normal += -0.5 * (std::log(2 * M_PI * s2) + r[k] * r[k] / s2);
  }
  const double surv = std::log(0.6) + 0.4 * 1.5 - 1.2 * std::exp(0.6);
  EXPECT_NEAR(ml.loglik, normal + surv, 1e-10);
  ASSERT_EQ(ml.per_subject.size(), 1u);
}

TEST(MarginalLikelihood, CommonRandomNumbers) {
  const Fixture f = small_fixture(7, true);
  const double a = marginal_loglik(f.subjects, f.designs, f.p, 2000, 11).loglik;
  const double b = marginal_loglik(f.subjects, f.designs, f.p, 2000, 11).loglik;
  const double c = marginal_loglik(f.subjects, f.designs, f.p, 2000, 12).loglik;
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_NEAR(a, c, 0.05 * std::abs(a));
}

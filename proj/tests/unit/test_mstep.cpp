#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fjm/mcem.hpp"
#include "fjm/simulate.hpp"
#include "helpers.hpp"

using namespace fjm;
using fjm::testing::make_subject;
using fjm::testing::mean_values;
using fjm::testing::random_params;
using fjm::testing::step_hazard;

namespace {

struct World {
  ModelParams p;
  std::vector<SubjectView> subjects;
  std::vector<SubjectDesign> designs;
  std::vector<Eigen::VectorXd> scores;
};

// Subjects on staggered grids with y = mu + Z b (+ noise).
World make_world(std::uint64_t seed, int n, double noise_sd, double beta2 = std::nan("")) {
  std::mt19937_64 rng(seed);
  World w;
  w.p = random_params(2, 2, 2, 0, rng);
  if (!std::isnan(beta2)) w.p.beta(1) = beta2;
  const OrthonormalBasis basis(w.p.basis);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    std::vector<double> t;
    for (int k = 0; k < 6; ++k) t.push_back(u(rng));
    std::sort(t.begin(), t.end());
    SubjectView s = make_subject(t, mean_values(w.p, t), 1.0, 0, Eigen::VectorXd(), i + 1);
    s.index = i;
    const SubjectDesign d = build_designs({s}, basis)[0];
    Eigen::VectorXd b = w.p.prior_variances().cwiseSqrt();
    for (Eigen::Index k = 0; k < b.size(); ++k) b(k) *= g(rng);
    const Eigen::VectorXd y = loading_matrix(s, d, w.p) * b;
    int row = 0;
    for (int j = 0; j < 2; ++j)
      for (int k : s.observed[j]) s.values(j, k) += y(row++) + noise_sd * g(rng);
    w.subjects.push_back(s);
    w.designs.push_back(d);
    w.scores.push_back(b);
  }
  return w;
}

}  // namespace

TEST(MStepVariances, MeanSquaredScores) {
  const double r = std::sqrt(2.0);
  std::vector<Eigen::VectorXd> b;
  // K = L0 + J L1 = 1 + 2 * 1
  b.push_back(Eigen::Vector3d(r, 1.0, 3.0));
  b.push_back(Eigen::Vector3d(-r, -1.0, 1.0));
  const PosteriorMoments post = PosteriorMoments::point_mass(b, Eigen::Vector3d::Zero());
  const auto [d0, d1] = mstep_variances(post, 1, 1, 2);
  EXPECT_NEAR(d0(0), 2.0, 1e-14);
  EXPECT_NEAR(d1(0), (1.0 + 9.0 + 1.0 + 1.0) / 4.0, 1e-14);
}

TEST(MStepSigma, ExactFitFloorsAtZero) {
  World w = make_world(1, 10, 0.0);
  for (auto& b : w.scores) b.setZero();
  for (auto& s : w.subjects) s.values = mean_values(w.p, s.times);
  const PosteriorMoments post = PosteriorMoments::point_mass(w.scores, w.p.cox.gamma_eta);
  const Eigen::VectorXd s2 = mstep_sigma(build_mstep_data(w.subjects, w.designs), post, w.p);
  EXPECT_LT(s2.maxCoeff(), 1e-7);
}

TEST(MStepSigma, MatchesSampleAverageOfResiduals) {
  const World w = make_world(2, 8, 0.5);
  const MStepData md = build_mstep_data(w.subjects, w.designs);
  PosteriorMoments post;
  post.K = w.p.K();
  Eigen::VectorXd direct = Eigen::VectorXd::Zero(2), count = Eigen::VectorXd::Zero(2);
  for (std::size_t i = 0; i < w.subjects.size(); ++i) {
    const GaussianConditional c = conditional_moments(w.subjects[i], w.designs[i], w.p);
    Eigen::MatrixXd b;
    Eigen::VectorXd lw;
    const Eigen::VectorXd gamma = Eigen::VectorXd::LinSpaced(w.p.K(), -0.3, 0.3);
    estep_subject_reference(c, WeightInputs{1, 0.4}, gamma, 300, StreamKey{1, 1, i, StreamTag::EStep}, &b, &lw);
    post.subjects.push_back(moments_from_sample(b, lw, gamma));
    const Eigen::VectorXd wq = (lw.array() - lw.maxCoeff()).exp();
    const Eigen::MatrixXd Z = loading_matrix(w.subjects[i], w.designs[i], w.p);
    const Eigen::VectorXd r = residual_vector(w.subjects[i], w.designs[i], w.p);
    for (int q = 0; q < b.cols(); ++q) {
      const Eigen::VectorXd e = r - Z * b.col(q);
      int row = 0;
      for (int j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < w.subjects[i].observed[j].size(); ++k, ++row)
          direct(j) += wq(q) / wq.sum() * e(row) * e(row);
    }
    for (int j = 0; j < 2; ++j) count(j) += w.subjects[i].n_observed(j);
  }
  const Eigen::VectorXd s2 = mstep_sigma(md, post, w.p);
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(s2(j), direct(j) / count(j), 1e-10);
  const Eigen::VectorXd rss = expected_rss(md, post, w.p);
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(rss(j), direct(j), 1e-9);
}

TEST(MStepMean, ZeroScoresIsOrdinaryLeastSquares) {
  World w = make_world(3, 15, 0.3);
  for (auto& b : w.scores) b.setZero();
  const PosteriorMoments post = PosteriorMoments::point_mass(w.scores, w.p.cox.gamma_eta);
  const Eigen::MatrixXd alpha = mstep_mean(build_mstep_data(w.subjects, w.designs), post, w.p);
  for (int j = 0; j < 2; ++j) {
    Eigen::MatrixXd X(0, 9);
    Eigen::VectorXd y(0);
    for (std::size_t i = 0; i < w.subjects.size(); ++i) {
      const auto& s = w.subjects[i];
      for (int k : s.observed[j]) {
        X.conservativeResize(X.rows() + 1, Eigen::NoChange);
        y.conservativeResize(y.size() + 1);
        X.row(X.rows() - 1) = w.designs[i].B.row(k);
        y(y.size() - 1) = s.values(j, k);
      }
    }
    const Eigen::VectorXd ols = X.colPivHouseholderQr().solve(y);
    EXPECT_LT((alpha.row(j).transpose() - ols).cwiseAbs().maxCoeff(), 1e-8) << j;
  }
}

TEST(MStepMean, NormalEquationsHold) {
  const World w = make_world(4, 30, 0.3);
  const PosteriorMoments post = PosteriorMoments::point_mass(w.scores, w.p.cox.gamma_eta);
  ModelParams q = w.p;
  q.alpha = mstep_mean(build_mstep_data(w.subjects, w.designs), post, w.p);
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(9);
    for (std::size_t i = 0; i < w.subjects.size(); ++i) {
      const auto& s = w.subjects[i];
      const Eigen::VectorXd fit = w.designs[i].Bt * (q.theta0 * w.scores[i].head(2) +
                                                    q.theta1 * w.scores[i].segment(2 + 2 * j, 2));
      for (int k : s.observed[j])
        g += w.designs[i].B.row(k).transpose() *
             (s.values(j, k) - w.designs[i].B.row(k).dot(q.alpha.row(j)) - q.beta(j) * fit(k));
    }
    EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-8) << j;
  }
}

TEST(MStepMean, CaseTwoMeanRecovery) {
  const SimSpec spec = case2_spec(800, 9);
  const SimData d = generate(spec);
  const ModelParams truth = params_from_spec(spec, BasisConfig{});
  const OrthonormalBasis basis(truth.basis);
  const auto designs = build_designs(d.joined.subjects, basis);
  const PosteriorMoments post = PosteriorMoments::point_mass(d.truth.scores, truth.cox.gamma_eta);
  ModelParams q = truth;
  q.alpha = mstep_mean(build_mstep_data(d.joined.subjects, designs), post, truth);
  double sup = 0.0;
  for (int g = 0; g <= 100; ++g) {
    const double t = g / 100.0;
    sup = std::max(sup, std::abs(basis.raw(t).dot(q.alpha.row(0)) - 5.0 * std::sin(2 * M_PI * t)));
  }
  EXPECT_LT(sup, 0.5);
}

TEST(MStepTheta, ExactScoresGiveAFixedPoint) {
  const World w = make_world(5, 60, 0.0);
  const PosteriorMoments post = PosteriorMoments::point_mass(w.scores, w.p.cox.gamma_eta);
  const MStepData md = build_mstep_data(w.subjects, w.designs);
  const ThetaUpdate u = mstep_theta(md, post, w.p, 1e-12, 1);
  EXPECT_LT((u.theta0 - w.p.theta0).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((u.theta1 - w.p.theta1).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MStepTheta, FinalizedEigenIsOrthonormalAndSorted) {
  const World w = make_world(6, 60, 0.4);
  const PosteriorMoments post = PosteriorMoments::point_mass(w.scores, w.p.cox.gamma_eta);
  const MStepData md = build_mstep_data(w.subjects, w.designs);
  const OrthonormalBasis basis(w.p.basis);
  const auto [d0, d1] = mstep_variances(post, 2, 2, 2);
  const EigenUpdate e = mstep_eigen(md, post, w.p, d0, d1, basis.ortho_integrals());
  for (const FinalizedEigen* f : {&e.shared, &e.specific}) {
    const Eigen::MatrixXd I = f->theta.transpose() * f->theta;
    EXPECT_LT((I - Eigen::MatrixXd::Identity(I.rows(), I.cols())).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index k = 1; k < f->d.size(); ++k) EXPECT_GE(f->d(k - 1), f->d(k));
    for (Eigen::Index k = 0; k < f->theta.cols(); ++k) EXPECT_GT(f->theta.col(k).dot(basis.ortho_integrals()), 0.0);
  }
}

TEST(MStepBeta, ExactRatio) {
  World w = make_world(7, 25, 0.0, 2.0);
  const PosteriorMoments post = PosteriorMoments::point_mass(w.scores, w.p.cox.gamma_eta);
  ModelParams start = w.p;
  start.beta(1) = 1.0;
  const Eigen::VectorXd beta = mstep_beta(build_mstep_data(w.subjects, w.designs), post, start);
  EXPECT_EQ(beta(0), 1.0);
  EXPECT_NEAR(beta(1), 2.0, 1e-10);
}

TEST(MStep, FullUpdateKeepsInvariants) {
  World w = make_world(8, 40, 0.3);
  w.p.cox.gamma_eta.setConstant(0.1);
  std::vector<double> events;
  for (int i = 0; i < 40; ++i) {
    w.subjects[i].T = 0.5 + 0.01 * i;
    w.subjects[i].delta = i % 2;
    if (i % 2) events.push_back(w.subjects[i].T);
  }
  w.p.h0 = step_hazard(events, 0.05);
  EStepOptions eo;
  eo.Q = 300;
  const PosteriorMoments post = e_step(w.subjects, w.designs, w.p, eo);
  const OrthonormalBasis basis(w.p.basis);
  const MStepResult r = m_step(build_mstep_data(w.subjects, w.designs), w.subjects, post, w.p, basis, EmConfig{});
  EXPECT_EQ(check_invariants(r.params), "");
  EXPECT_EQ(r.params.beta(0), 1.0);
}

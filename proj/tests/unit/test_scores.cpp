#include <random>

#include <gtest/gtest.h>

#include "fjm/scores.hpp"
#include "helpers.hpp"

using namespace fjm;
using fjm::testing::make_subject;
using fjm::testing::mean_values;
using fjm::testing::random_params;

namespace {

// Dense joint draws of (b, y) for one subject.
struct Joint {
  Eigen::MatrixXd b;  // K x N
  Eigen::MatrixXd y;  // n_obs x N
};

Joint simulate_joint(const SubjectView& s, const SubjectDesign& d, const ModelParams& p, int N, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const Eigen::MatrixXd Z = loading_matrix(s, d, p);
  const Eigen::VectorXd sd = p.prior_variances().cwiseSqrt();
  Eigen::VectorXd noise_sd(Z.rows());
  int row = 0;
  for (int j = 0; j < s.J(); ++j)
    for (std::size_t k = 0; k < s.observed[j].size(); ++k) noise_sd(row++) = std::sqrt(p.sigma2(j));
  Joint out{Eigen::MatrixXd(p.K(), N), Eigen::MatrixXd(Z.rows(), N)};
  for (int q = 0; q < N; ++q) {
    for (int k = 0; k < p.K(); ++k) out.b(k, q) = sd(k) * g(rng);
    out.y.col(q) = Z * out.b.col(q);
    for (Eigen::Index r = 0; r < Z.rows(); ++r) out.y(r, q) += noise_sd(r) * g(rng);
  }
  return out;
}

}  // namespace

TEST(MarginalCov, NoScoresIsNoiseOnly) {
  std::mt19937_64 rng(1);
  ModelParams p = random_params(2, 2, 1, 0, rng);
  p.d0.setZero();
  p.d1.setZero();
  const std::vector<double> t = {0.0, 0.4, 0.9};
  const SubjectView s = make_subject(t, mean_values(p, t), 1.0, 0);
  const auto d = build_designs({s}, OrthonormalBasis(p.basis))[0];
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(6, 6);
  expect.diagonal() << p.sigma2(0), p.sigma2(0), p.sigma2(0), p.sigma2(1), p.sigma2(1), p.sigma2(1);
  EXPECT_LT((marginal_cov_y(s, d, p) - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MarginalCov, SingleTimeHandComputed) {
  std::mt19937_64 rng(2);
  const ModelParams p = random_params(2, 1, 1, 0, rng);
  const std::vector<double> t = {0.35};
  const SubjectView s = make_subject(t, mean_values(p, t), 1.0, 0);
  const OrthonormalBasis b(p.basis);
  const auto d = build_designs({s}, b)[0];
  const double phi = p.theta0.col(0).dot(b.ortho(0.35)), psi = p.theta1.col(0).dot(b.ortho(0.35));
  const double b1 = p.beta(0), b2 = p.beta(1), d0 = p.d0(0), d1 = p.d1(0);
  Eigen::Matrix2d expect;
  expect << b1 * b1 * (phi * phi * d0 + psi * psi * d1) + p.sigma2(0), b1 * b2 * phi * phi * d0,
      b1 * b2 * phi * phi * d0, b2 * b2 * (phi * phi * d0 + psi * psi * d1) + p.sigma2(1);
  EXPECT_LT((marginal_cov_y(s, d, p) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MarginalCov, MatchesSimulatedCovariance) {
  std::mt19937_64 rng(3);
  const ModelParams p = random_params(2, 2, 2, 0, rng);
  const std::vector<double> t = {0.1, 0.5, 0.8};
  Eigen::MatrixXd v = mean_values(p, t);
  v(1, 0) = std::nan("");
  const SubjectView s = make_subject(t, v, 1.0, 0);
  const auto d = build_designs({s}, OrthonormalBasis(p.basis))[0];
  const Eigen::MatrixXd V = marginal_cov_y(s, d, p);
  const int N = 200000;
  const Joint jd = simulate_joint(s, d, p, N, 99);
  const Eigen::MatrixXd centered = jd.y.colwise() - jd.y.rowwise().mean();
  const Eigen::MatrixXd S = centered * centered.transpose() / (N - 1);
  for (Eigen::Index a = 0; a < V.rows(); ++a)
    for (Eigen::Index c = 0; c < V.cols(); ++c) {
      // Var of a Gaussian sample covariance: (V_ac^2 + V_aa V_cc) / N
      const double se = std::sqrt((V(a, c) * V(a, c) + V(a, a) * V(c, c)) / N);
      EXPECT_LT(std::abs(S(a, c) - V(a, c)), 3.0 * se) << a << "," << c;
    }
}

TEST(Conditional, ObservedMeanGivesZeroScores) {
  std::mt19937_64 rng(4);
  const ModelParams p = random_params(3, 2, 1, 0, rng);
  const std::vector<double> t = {0.0, 0.2, 0.6, 0.7};
  const SubjectView s = make_subject(t, mean_values(p, t), 1.0, 0);
  const auto d = build_designs({s}, OrthonormalBasis(p.basis))[0];
  const GaussianConditional g = conditional_moments(s, d, p);
  EXPECT_LT(g.mean.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Conditional, ClosedFormAndShrinkage) {
  std::mt19937_64 rng(5);
  const ModelParams p = random_params(2, 2, 2, 0, rng);
  const std::vector<double> t = {0.05, 0.3, 0.55, 0.95};
  Eigen::MatrixXd v = mean_values(p, t);
  std::normal_distribution<double> g;
  for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] += g(rng);
  const SubjectView s = make_subject(t, v, 1.0, 0);
  const auto d = build_designs({s}, OrthonormalBasis(p.basis))[0];
  const GaussianConditional c = conditional_moments(s, d, p);

  const Eigen::MatrixXd Z = loading_matrix(s, d, p);
  const Eigen::MatrixXd D = p.prior_variances().asDiagonal();
  const Eigen::MatrixXd V = marginal_cov_y(s, d, p);
  const Eigen::VectorXd r = residual_vector(s, d, p);
  const Eigen::MatrixXd G = D * Z.transpose() * V.inverse();
  EXPECT_LT((c.mean - G * r).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((c.cov - (D - G * Z * D)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((c.chol * c.chol.transpose() - c.cov).cwiseAbs().maxCoeff(), 1e-10);
  // D - Cov(b | y) is positive semidefinite
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D - c.cov);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-10);

  const double logdet = std::log(V.determinant());
  const double expect = -0.5 * (r.size() * std::log(2 * M_PI) + logdet + r.dot(V.inverse() * r));
  EXPECT_NEAR(c.log_fy, expect, 1e-9);
}

TEST(Conditional, NoObservationsReturnsPrior) {
  std::mt19937_64 rng(6);
  const ModelParams p = random_params(2, 1, 1, 0, rng);
  const SubjectView s = make_subject({}, Eigen::MatrixXd(2, 0), 0.5, 1);
  const auto d = build_designs({s}, OrthonormalBasis(p.basis))[0];
  const GaussianConditional c = conditional_moments(s, d, p);
  EXPECT_LT(c.mean.norm(), 1e-15);
  EXPECT_LT((c.cov - Eigen::MatrixXd(p.prior_variances().asDiagonal())).norm(), 1e-15);
}

TEST(Conditional, ScoresSharpenAsNoiseVanishes) {
  std::mt19937_64 rng(7);
  ModelParams p = random_params(2, 2, 1, 0, rng);
  std::vector<double> t;
  for (int k = 0; k <= 20; ++k) t.push_back(k / 20.0);
  const OrthonormalBasis b(p.basis);
  const int n = 40;
  std::normal_distribution<double> g;
  std::vector<Eigen::VectorXd> truth(n);
  for (auto& x : truth) {
    x = p.prior_variances().cwiseSqrt();
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) *= g(rng);
  }
  double prev = std::numeric_limits<double>::infinity();
  for (double s2 : {1.0, 0.1, 0.01, 0.001}) {
    p.sigma2.setConstant(s2);
    double sq = 0.0;
    std::mt19937_64 noise(8);
    for (int i = 0; i < n; ++i) {
      SubjectView s = make_subject(t, mean_values(p, t), 1.0, 0);
      const auto d = build_designs({s}, b)[0];
      Eigen::VectorXd y = loading_matrix(s, d, p) * truth[i];
      for (Eigen::Index k = 0; k < y.size(); ++k) y(k) += std::sqrt(s2) * g(noise);
      int row = 0;
      for (int j = 0; j < 2; ++j)
        for (int k : s.observed[j]) s.values(j, k) += y(row++);
      sq += (conditional_moments(s, d, p).mean - truth[i]).squaredNorm();
    }
    const double rmse = std::sqrt(sq / n);
    EXPECT_LT(rmse, prev) << s2;
    prev = rmse;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(Sampling, MeanWithinFourStandardErrors) {
  std::mt19937_64 rng(9);
  const ModelParams p = random_params(2, 2, 1, 0, rng);
  const std::vector<double> t = {0.2, 0.4};
  const SubjectView s = make_subject(t, (mean_values(p, t).array() + 0.7).matrix(), 1.0, 0);
  const auto d = build_designs({s}, OrthonormalBasis(p.basis))[0];
  const GaussianConditional c = conditional_moments(s, d, p);
  const int Q = 100000;
  const Eigen::MatrixXd draws = sample_scores(c, Q, StreamKey{5, 0, 0, StreamTag::Sampling});
  const Eigen::VectorXd m = draws.rowwise().mean();
  for (int k = 0; k < p.K(); ++k) EXPECT_LT(std::abs(m(k) - c.mean(k)), 4.0 * std::sqrt(c.cov(k, k) / Q)) << k;
}

TEST(Sampling, ZeroCovarianceAndDeterminism) {
  GaussianConditional c;
  c.mean = Eigen::Vector3d(1.0, -2.0, 0.5);
  c.cov = Eigen::Matrix3d::Zero();
  c.chol = psd_sqrt(c.cov);
  const Eigen::MatrixXd draws = sample_scores(c, 50, StreamKey{1, 2, 3, StreamTag::Sampling});
  EXPECT_LT((draws.colwise() - c.mean).cwiseAbs().maxCoeff(), 1e-15);

  c.cov = Eigen::Vector3d(1.0, 2.0, 0.5).asDiagonal();
  c.chol = psd_sqrt(c.cov);
  const StreamKey key{7, 1, 4, StreamTag::Sampling};
  EXPECT_EQ(sample_scores(c, 20, key), sample_scores(c, 20, key));
  EXPECT_NE(sample_scores(c, 20, key), sample_scores(c, 20, StreamKey{7, 1, 5, StreamTag::Sampling}));
}

TEST(Sampling, PsdSqrtOfSingularMatrix) {
  Eigen::Vector3d v(1.0, 2.0, -1.0);
  const Eigen::MatrixXd S = v * v.transpose();
  const Eigen::MatrixXd R = psd_sqrt(S);
  EXPECT_LT((R * R.transpose() - S).cwiseAbs().maxCoeff(), 1e-12);
}

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fjm/covariance.hpp"
#include "fjm/error.hpp"
#include "fjm/simulate.hpp"

using namespace fjm;

namespace {

Eigen::MatrixXd random_psd(int c, int rank, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd A(c, rank);
  for (int i = 0; i < c; ++i)
    for (int k = 0; k < rank; ++k) A(i, k) = g(rng);
  return A * A.transpose();
}

std::vector<std::vector<Eigen::MatrixXd>> forward_surfaces(const Eigen::VectorXd& beta, const Eigen::MatrixXd& C0,
                                                           const Eigen::MatrixXd& C1) {
  const int J = static_cast<int>(beta.size());
  std::vector<std::vector<Eigen::MatrixXd>> C(J, std::vector<Eigen::MatrixXd>(J));
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < J; ++k) C[j][k] = beta(j) * beta(k) * C0 + (j == k ? beta(j) * beta(j) * C1 : 0.0 * C1);
  return C;
}

// Coefficients of f in the orthonormal basis by Gauss-Legendre projection.
Eigen::VectorXd project(const OrthonormalBasis& b, const Curve& f) {
  const Quadrature q = b.quadrature(20);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(b.c());
  for (std::size_t k = 0; k < q.nodes.size(); ++k) a += q.weights[k] * f(q.nodes[k]) * b.ortho(q.nodes[k]);
  return a;
}

}  // namespace

TEST(Identifiability, RecoversExactSurfaces) {
  std::mt19937_64 rng(11);
  const Eigen::MatrixXd C0 = random_psd(9, 2, rng), C1 = random_psd(9, 2, rng);
  const Eigen::Vector2d beta(1.0, -1.44);
  const Identified id = solve_identifiability(forward_surfaces(beta, C0, C1));
  EXPECT_NEAR(id.beta(0), 1.0, 1e-12);
  EXPECT_NEAR(id.beta(1), -1.44, 1e-8);
  EXPECT_LT((id.C0.coef - C0).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((id.C1.coef - C1).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Identifiability, FiveOutcomes) {
  std::mt19937_64 rng(12);
  const Eigen::MatrixXd C0 = random_psd(9, 3, rng), C1 = random_psd(9, 2, rng);
  Eigen::VectorXd beta(5);
  beta << 1.0, -1.21, -0.25, -0.21, 0.34;
  const Identified id = solve_identifiability(forward_surfaces(beta, C0, C1));
  EXPECT_LT((id.beta - beta).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((id.C0.coef - C0).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((id.C1.coef - C1).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Identifiability, ZeroCrossCovarianceIsDegenerate) {
  std::mt19937_64 rng(13);
  auto C = forward_surfaces(Eigen::Vector2d(1.0, 2.0), Eigen::MatrixXd::Zero(6, 6), random_psd(6, 2, rng));
  try {
    solve_identifiability(C);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateScaling);
  }
}

TEST(Eigen, RankOneSurface) {
  const OrthonormalBasis b(BasisConfig{9, 4, 1.0});
  Eigen::VectorXd theta = Eigen::VectorXd::LinSpaced(9, -1.0, 2.0).normalized();
  const EigenSystem es = eigendecompose(5.0 * theta * theta.transpose(), 1, b.ortho_integrals());
  ASSERT_EQ(es.values.size(), 1);
  EXPECT_NEAR(es.values(0), 5.0, 1e-12);
  const double sign = theta.dot(b.ortho_integrals()) > 0 ? 1.0 : -1.0;
  EXPECT_LT((es.theta.col(0) - sign * theta).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_GT(es.theta.col(0).dot(b.ortho_integrals()), 0.0);
  EXPECT_FALSE(es.rank_deficient);
}

TEST(Eigen, RankDeficiencyFlagged) {
  const OrthonormalBasis b(BasisConfig{9, 4, 1.0});
  const Eigen::VectorXd theta = Eigen::VectorXd::Unit(9, 2);
  const EigenSystem es = eigendecompose(2.0 * theta * theta.transpose(), 3, b.ortho_integrals());
  EXPECT_TRUE(es.rank_deficient);
  EXPECT_NEAR(es.values(0), 2.0, 1e-12);
}

TEST(Eigen, CaseTwoSharedSurface) {
  const OrthonormalBasis b(BasisConfig{9, 4, 1.0});
  const SimSpec spec = case2_spec(10, 1);
  Eigen::MatrixXd A(9, 2);
  A.col(0) = project(b, spec.phi[0]);
  A.col(1) = project(b, spec.phi[1]);
  // orthonormalise the projections so the eigenpairs are exact
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(9, 2);
  for (int k = 0; k < 2; ++k)
    if (Q.col(k).dot(A.col(k)) < 0) Q.col(k) *= -1.0;
  const Eigen::MatrixXd C0 = Q * spec.d0.asDiagonal() * Q.transpose();
  const EigenSystem es = eigendecompose(C0, 2, b.ortho_integrals());
  EXPECT_NEAR(es.values(0), 1.0, 1e-6);
  EXPECT_NEAR(es.values(1), 0.5, 1e-6);
  double sup_proj = 0.0, sup_truth = 0.0;
  for (int g = 0; g <= 200; ++g) {
    const double t = g / 200.0;
    const Eigen::VectorXd bt = b.ortho(t);
    for (int k = 0; k < 2; ++k) {
      const double s = es.theta.col(k).dot(Q.col(k)) < 0 ? -1.0 : 1.0;
      sup_proj = std::max(sup_proj, std::abs(s * es.theta.col(k).dot(bt) - Q.col(k).dot(bt)));
      sup_truth = std::max(sup_truth, std::abs(s * es.theta.col(k).dot(bt) - spec.phi[k](t)));
    }
  }
  EXPECT_LT(sup_proj, 1e-6);
  // nine cubic functions resolve cos(3 pi t) only to about 0.05
  EXPECT_LT(sup_truth, 0.1);
}

TEST(SignRule, IntegralPositive) {
  const OrthonormalBasis b(BasisConfig{9, 4, 1.0});
  Eigen::MatrixXd theta = -Eigen::MatrixXd::Identity(9, 3);
  apply_sign_rule(theta, b.ortho_integrals());
  for (int k = 0; k < 3; ++k) EXPECT_GT(theta.col(k).dot(b.ortho_integrals()), 0.0);
}

TEST(Surface, EvalMatchesQuadraticForm) {
  const OrthonormalBasis b(BasisConfig{9, 4, 1.0});
  std::mt19937_64 rng(3);
  CovSurface s;
  s.coef = random_psd(9, 2, rng);
  const Eigen::MatrixXd grid = s.on_grid(b, {0.0, 0.3, 1.0});
  EXPECT_NEAR(grid(1, 2), b.ortho(0.3).dot(s.coef * b.ortho(1.0)), 1e-12);
  EXPECT_NEAR(s.eval(b, 0.3, 1.0), grid(1, 2), 1e-12);
}

TEST(RawCovariances, NoiseFreeScoreFreeDataGivesZeroSurfaces) {
  auto basis = std::make_shared<const OrthonormalBasis>(BasisConfig{9, 4, 1.0});
  SimSpec s = case2_spec(60, 4);
  Eigen::MatrixXd alpha(2, 9);
  alpha.row(0) = Eigen::VectorXd::LinSpaced(9, 1.0, 3.0).transpose();
  alpha.row(1) = Eigen::VectorXd::LinSpaced(9, -2.0, 0.5).transpose();
  s.mu = {Curve::bspline(basis, alpha.row(0).transpose()), Curve::bspline(basis, alpha.row(1).transpose())};
  s.d0.setZero();
  s.d1.setZero();
  s.sigma2.setZero();
  s.gamma0.setZero();
  s.gamma1 = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  s.h0 = 0.3;
  s.c0 = std::numeric_limits<double>::infinity();
  const SimData d = generate(s);
  const RawCovariances rc = raw_covariances(d.joined, *basis, alpha);
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k) EXPECT_LT(rc.surfaces[j][k].coef.cwiseAbs().maxCoeff(), 1e-6) << j << k;
  EXPECT_LT(rc.sigma2.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RawCovariances, CaseTwoRecovery) {
  // no hazard coupling: dropout is uninformative, so the pooled
  // cross-products are unbiased at every time; n large enough that the
  // pointwise sampling error (about 0.3 at n = 800) is small
  SimSpec spec = case2_spec(8000, 21);
  spec.gamma0.setZero();
  for (auto& g : spec.gamma1) g.setZero();
  const SimData d = generate(spec);
  const BasisConfig cfg{9, 4, 1.0};
  const OrthonormalBasis b(cfg);
  const ModelParams truth = params_from_spec(spec, cfg);
  const RawCovariances rc = raw_covariances(d.joined, b, truth.alpha);

  auto true_cov = [&](int j, int k, double s, double t) {
    double v = 0.0;
    for (int l = 0; l < spec.L0(); ++l) v += spec.beta(j) * spec.beta(k) * spec.d0(l) * spec.phi[l](s) * spec.phi[l](t);
    if (j == k)
      for (int l = 0; l < spec.L1(); ++l) v += spec.beta(j) * spec.beta(j) * spec.d1(l) * spec.psi[l](s) * spec.psi[l](t);
    return v;
  };
  // No subject is observed at t = 1 and the diagonal is left out of the
  // smoother, so the corners are extrapolated: check the sup-norm on the
  // interior and the L2 error over the observed square [0, 0.9]^2.
  for (int j = 0; j < 2; ++j)
    for (int k = j; k < 2; ++k) {
      double err = 0.0, scale = 0.0, l2 = 0.0, norm = 0.0;
      for (int a = 0; a <= 18; ++a)
        for (int c = 0; c <= 18; ++c) {
          const double s = a / 20.0, t = c / 20.0;
          const double truth_v = true_cov(j, k, s, t);
          const double e = rc.surfaces[j][k].eval(b, s, t) - truth_v;
          l2 += e * e;
          norm += truth_v * truth_v;
          if (a < 2 || c < 2) continue;
          scale = std::max(scale, std::abs(truth_v));
          err = std::max(err, std::abs(e));
        }
      EXPECT_LT(err, 0.15 * scale) << "pair " << j << k;
      EXPECT_LT(std::sqrt(l2 / norm), 0.15) << "pair " << j << k;
    }
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(rc.sigma2(j), 0.75, 0.2 * 0.75);
}

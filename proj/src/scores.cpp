#include "fjm/scores.hpp"

#include <cmath>

#include "fjm/error.hpp"

namespace fjm {

std::vector<SubjectDesign> build_designs(const std::vector<SubjectView>& subjects, const OrthonormalBasis& basis) {
  std::vector<SubjectDesign> out(subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    out[i].B = basis.eval_matrix(subjects[i].times, false);
    out[i].Bt = out[i].B * basis.gram_inv_sqrt();
  }
  return out;
}

Eigen::MatrixXd loading_matrix(const SubjectView& s, const SubjectDesign& d, const ModelParams& p) {
  const int L0 = p.L0(), L1 = p.L1();
  if (s.J() != p.J()) throw Error(Errc::DimensionMismatch, "subject outcome count differs from the model");
  const Eigen::MatrixXd Phi = d.Bt * p.theta0;
  const Eigen::MatrixXd Psi = d.Bt * p.theta1;
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(s.n_observed(), p.K());
  int row = 0;
  for (int j = 0; j < s.J(); ++j)
    for (int k : s.observed[j]) {
      if (L0) Z.row(row).head(L0) = p.beta(j) * Phi.row(k);
      if (L1) Z.row(row).segment(L0 + j * L1, L1) = p.beta(j) * Psi.row(k);
      ++row;
    }
  return Z;
}

Eigen::VectorXd residual_vector(const SubjectView& s, const SubjectDesign& d, const ModelParams& p) {
  Eigen::VectorXd r(s.n_observed());
  int row = 0;
  for (int j = 0; j < s.J(); ++j)
    for (int k : s.observed[j]) r(row++) = s.values(j, k) - d.B.row(k).dot(p.alpha.row(j));
  return r;
}

namespace {

Eigen::VectorXd noise_diagonal(const SubjectView& s, const ModelParams& p) {
  Eigen::VectorXd v(s.n_observed());
  int row = 0;
  for (int j = 0; j < s.J(); ++j)
    for (std::size_t k = 0; k < s.observed[j].size(); ++k) v(row++) = p.sigma2(j);
  return v;
}

}  // namespace

Eigen::MatrixXd marginal_cov_y(const SubjectView& s, const SubjectDesign& d, const ModelParams& p) {
  const Eigen::MatrixXd Z = loading_matrix(s, d, p);
  Eigen::MatrixXd V = Z * p.prior_variances().asDiagonal() * Z.transpose();
  V.diagonal() += noise_diagonal(s, p);
  return 0.5 * (V + V.transpose());
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov) {
  if (cov.size() == 0) return cov;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    const Eigen::VectorXd dg = llt.matrixLLT().diagonal();
    if (dg.minCoeff() > 1e-7 * std::max(dg.maxCoeff(), 1e-300)) return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

GaussianConditional conditional_moments(const SubjectView& s, const SubjectDesign& d, const ModelParams& p) {
  const Eigen::VectorXd Dv = p.prior_variances();
  const int K = p.K();
  const Eigen::MatrixXd Z = loading_matrix(s, d, p);
  const Eigen::VectorXd r = residual_vector(s, d, p);
  const Eigen::Index N = r.size();

  GaussianConditional g;
  if (N == 0) {
    g.mean = Eigen::VectorXd::Zero(K);
    g.cov = Dv.asDiagonal();
    g.chol = psd_sqrt(g.cov);
    return g;
  }

  const Eigen::MatrixXd ZD = Z * Dv.asDiagonal();  // Cov(y, b)
  Eigen::MatrixXd V = ZD * Z.transpose();
  V.diagonal() += noise_diagonal(s, p);
  V = 0.5 * (V + V.transpose());

  Eigen::LLT<Eigen::MatrixXd> llt(V);
  bool ok = llt.info() == Eigen::Success && llt.rcond() >= 1e-12;
  if (!ok) {
    V.diagonal().array() += 1e-10 * std::max(1.0, V.diagonal().maxCoeff());
    llt.compute(V);
    g.ridge_used = true;
    if (llt.info() != Eigen::Success) throw Error(Errc::SingularMarginal, "Cov(y) is singular for subject " + std::to_string(s.id));
  }
  const Eigen::VectorXd Vr = llt.solve(r);
  const Eigen::MatrixXd VZD = llt.solve(ZD);
  g.mean = ZD.transpose() * Vr;
  g.cov = Dv.asDiagonal();
  g.cov.noalias() -= ZD.transpose() * VZD;
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  g.chol = psd_sqrt(g.cov);

  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  g.log_fy = -0.5 * (static_cast<double>(N) * std::log(2.0 * M_PI) + logdet + r.dot(Vr));
  return g;
}

Eigen::MatrixXd sample_scores(const GaussianConditional& cond, int Q, const StreamKey& key) {
  const Eigen::Index K = cond.mean.size();
  Engine eng = key.engine();
  NormalDist normal;
  Eigen::MatrixXd z(K, Q);
  for (int q = 0; q < Q; ++q)
    for (Eigen::Index k = 0; k < K; ++k) z(k, q) = normal(eng);
  Eigen::MatrixXd b = cond.chol * z;
  b.colwise() += cond.mean;
  return b;
}

}  // namespace fjm

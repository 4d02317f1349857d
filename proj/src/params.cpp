#include "fjm/params.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fjm/covariance.hpp"

namespace fjm {

Eigen::VectorXd ModelParams::prior_variances() const {
  Eigen::VectorXd v(K());
  v.head(L0()) = d0;
  for (int j = 0; j < J(); ++j) v.segment(L0() + j * L1(), L1()) = d1;
  return v;
}

std::vector<std::string> score_labels(int L0, int L1, int J) {
  std::vector<std::string> out;
  for (int l = 1; l <= L0; ++l) out.push_back("xi" + std::to_string(l));
  for (int j = 1; j <= J; ++j)
    for (int l = 1; l <= L1; ++l) out.push_back("zeta" + std::to_string(j) + "_" + std::to_string(l));
  return out;
}

FinalizedEigen finalize_eigen(const Eigen::MatrixXd& theta_work, const Eigen::VectorXd& d,
                              const Eigen::VectorXd& ortho_integrals) {
  const Eigen::Index c = theta_work.rows();
  const Eigen::Index L = theta_work.cols();
  FinalizedEigen out;
  if (L == 0) {
    out.theta = Eigen::MatrixXd::Zero(c, 0);
    out.d = Eigen::VectorXd::Zero(0);
    out.gamma_map = Eigen::MatrixXd::Zero(0, 0);
    return out;
  }
  Eigen::MatrixXd M = theta_work * d.cwiseMax(0.0).asDiagonal() * theta_work.transpose();
  M = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  out.theta.resize(c, L);
  out.d.resize(L);
  for (Eigen::Index k = 0; k < L; ++k) {
    out.d(k) = std::max(es.eigenvalues()(c - 1 - k), 0.0);
    out.theta.col(k) = es.eigenvectors().col(c - 1 - k);
  }
  apply_sign_rule(out.theta, ortho_integrals);

  const Eigen::MatrixXd R = out.theta.transpose() * theta_work;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv(k) > 1e-10 * sv(0)) inv(k) = 1.0 / sv(k);
  // R^{-T} = U S^{-1} V^T
  out.gamma_map = svd.matrixU() * inv.asDiagonal() * svd.matrixV().transpose();
  return out;
}

void enforce_invariants(ModelParams& p, const Eigen::VectorXd& ortho_integrals) {
  const int J = p.J();
  const int L0 = p.L0(), L1 = p.L1();
  const FinalizedEigen f0 = finalize_eigen(p.theta0, p.d0, ortho_integrals);
  const FinalizedEigen f1 = finalize_eigen(p.theta1, p.d1, ortho_integrals);
  p.theta0 = f0.theta;
  p.d0 = f0.d;
  p.theta1 = f1.theta;
  p.d1 = f1.d;
  if (p.cox.gamma_eta.size() == p.K()) {
    if (L0) p.cox.gamma_eta.head(L0) = f0.gamma_map * p.cox.gamma_eta.head(L0);
    for (int j = 0; j < J && L1; ++j)
      p.cox.gamma_eta.segment(L0 + j * L1, L1) = f1.gamma_map * p.cox.gamma_eta.segment(L0 + j * L1, L1);
  }
  if (J > 0) {
    // a non-unit beta_1 is absorbed into the latent scale
    const double b1 = p.beta(0);
    if (b1 != 1.0 && b1 != 0.0) {
      p.beta /= b1;
      p.d0 *= b1 * b1;
      p.d1 *= b1 * b1;
      if (p.cox.gamma_eta.size() == p.K()) p.cox.gamma_eta /= b1;
    }
    p.beta(0) = 1.0;
  }
  p.sigma2 = p.sigma2.cwiseMax(1e-8);
}

std::string check_invariants(const ModelParams& p, double tol) {
  std::ostringstream msg;
  auto ortho = [&](const Eigen::MatrixXd& T, const char* name) {
    const Eigen::MatrixXd E = T.transpose() * T - Eigen::MatrixXd::Identity(T.cols(), T.cols());
    if (E.size() && E.cwiseAbs().maxCoeff() > tol) msg << name << " columns not orthonormal; ";
  };
  auto desc = [&](const Eigen::VectorXd& d, const char* name) {
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      if (!(d(k) >= 0.0)) msg << name << " has a negative entry; ";
      if (k && d(k) > d(k - 1)) msg << name << " not descending; ";
    }
  };
  ortho(p.theta0, "theta0");
  ortho(p.theta1, "theta1");
  desc(p.d0, "d0");
  desc(p.d1, "d1");
  if (p.J() == 0 || p.beta(0) != 1.0) msg << "beta_1 != 1; ";
  if (p.sigma2.size() != p.J() || !(p.sigma2.array() > 0.0).all()) msg << "sigma2 not positive; ";
  if (p.alpha.rows() != p.J() || p.alpha.cols() != p.c()) msg << "alpha has wrong shape; ";
  if (p.cox.gamma_eta.size() != p.K()) msg << "gamma_eta has wrong length; ";
  return msg.str();
}

Eigen::VectorXd flatten(const ModelParams& p) {
  std::vector<double> v;
  for (int j = 0; j < p.alpha.rows(); ++j)
    for (int k = 0; k < p.alpha.cols(); ++k) v.push_back(p.alpha(j, k));
  for (int j = 1; j < p.J(); ++j) v.push_back(p.beta(j));
  for (Eigen::Index k = 0; k < p.theta0.size(); ++k) v.push_back(p.theta0.data()[k]);
  for (Eigen::Index k = 0; k < p.theta1.size(); ++k) v.push_back(p.theta1.data()[k]);
  for (Eigen::Index k = 0; k < p.d0.size(); ++k) v.push_back(p.d0(k));
  for (Eigen::Index k = 0; k < p.d1.size(); ++k) v.push_back(p.d1(k));
  for (Eigen::Index k = 0; k < p.sigma2.size(); ++k) v.push_back(p.sigma2(k));
  const Eigen::VectorXd g = p.cox.stacked();
  for (Eigen::Index k = 0; k < g.size(); ++k) v.push_back(g(k));
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ModelParams sign_aligned(const ModelParams& p, const ModelParams& ref) {
  ModelParams out = p;
  const int L0 = p.L0(), L1 = p.L1(), J = p.J();
  const bool has_gamma = out.cox.gamma_eta.size() == p.K();
  for (int k = 0; k < L0 && k < ref.L0(); ++k)
    if (out.theta0.col(k).dot(ref.theta0.col(k)) < 0.0) {
      out.theta0.col(k) *= -1.0;
      if (has_gamma) out.cox.gamma_eta(k) *= -1.0;
    }
  for (int k = 0; k < L1 && k < ref.L1(); ++k)
    if (out.theta1.col(k).dot(ref.theta1.col(k)) < 0.0) {
      out.theta1.col(k) *= -1.0;
      if (has_gamma)
        for (int j = 0; j < J; ++j) out.cox.gamma_eta(L0 + j * L1 + k) *= -1.0;
    }
  return out;
}

Eigen::MatrixXd mean_curves(const ModelParams& p, const OrthonormalBasis& basis, const std::vector<double>& grid) {
  return p.alpha * basis.eval_matrix(grid, false).transpose();
}

Eigen::MatrixXd eigenfunctions(const Eigen::MatrixXd& theta, const OrthonormalBasis& basis,
                               const std::vector<double>& grid) {
  return basis.eval_matrix(grid, true) * theta;
}

}  // namespace fjm

#pragma once

#include <vector>

#include <Eigen/Dense>

#include "fjm/data.hpp"
#include "fjm/params.hpp"
#include "fjm/rng.hpp"
#include "fjm/splines.hpp"

namespace fjm {

/// Basis rows at a subject's union grid: B (raw) and B~ (orthonormal).
struct SubjectDesign {
  Eigen::MatrixXd B;
  Eigen::MatrixXd Bt;
};

std::vector<SubjectDesign> build_designs(const std::vector<SubjectView>& subjects, const OrthonormalBasis& basis);

/// Loading matrix Z_i with one row per observed (outcome, time): the row for
/// outcome j carries beta_j Phi(t) in the shared block and beta_j Psi(t) in
/// block j.
Eigen::MatrixXd loading_matrix(const SubjectView& s, const SubjectDesign& d, const ModelParams& p);
/// y_i - mu_i over observed entries, stacked by outcome.
Eigen::VectorXd residual_vector(const SubjectView& s, const SubjectDesign& d, const ModelParams& p);
/// Cov(y_i) = Z D Z^T + Sigma over observed entries.
Eigen::MatrixXd marginal_cov_y(const SubjectView& s, const SubjectDesign& d, const ModelParams& p);

struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd chol;  // chol * chol^T = cov (lower or eigen-based square root)
  double log_fy = 0.0;   // log N(y_i; mu_i, Cov(y_i))
  bool ridge_used = false;
};

/// Gaussian conditioning of b_i on y_i. Throws SingularMarginal.
GaussianConditional conditional_moments(const SubjectView& s, const SubjectDesign& d, const ModelParams& p);

/// Lower Cholesky factor, falling back to an eigen square root for
/// semidefinite matrices.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov);

/// Q draws (columns) of mean + chol * z with z drawn in (q, k) order from the
/// given stream.
Eigen::MatrixXd sample_scores(const GaussianConditional& cond, int Q, const StreamKey& key);

}  // namespace fjm

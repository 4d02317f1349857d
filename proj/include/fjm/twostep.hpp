#pragma once

#include <vector>

#include <Eigen/Dense>

#include "fjm/covariance.hpp"
#include "fjm/data.hpp"
#include "fjm/params.hpp"
#include "fjm/splines.hpp"

namespace fjm {

struct TwoStepFit {
  ModelParams params;
  std::vector<Eigen::VectorXd> scores;  // E(b_i | y_i)
  Eigen::VectorXd spectrum0;            // all positive eigenvalues of C0
  Eigen::VectorXd spectrum1;            // all positive eigenvalues of C1
  bool rank_deficient = false;          // padding was needed for L0 or L1
  bool sign_ambiguous = false;
  int cox_iterations = 0;
  double cox_score_norm = 0.0;
};

/// Marginal estimator: smoothed means, smoothed covariances, scaling solve,
/// truncated eigendecompositions, Gaussian score prediction and a Cox fit
/// on the predicted scores. `gamma_mask` (length P + K) fixes entries at 0.
TwoStepFit fit_two_step(const JoinedData& data, int L0, int L1, const BasisConfig& cfg,
                        const Eigen::VectorXi& gamma_mask = {});

/// Parameters of a two-step fit with every invariant enforced.
ModelParams init_from_two_step(const TwoStepFit& fit);

/// Smallest L whose leading eigenvalues explain at least `threshold` of the
/// positive spectrum (0 for an empty spectrum).
int pve_rank(const Eigen::VectorXd& spectrum, double threshold);

}  // namespace fjm

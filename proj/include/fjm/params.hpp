#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fjm/splines.hpp"
#include "fjm/survival.hpp"

namespace fjm {

/// The full parameter set: spline means, scalings, eigen structure, noise,
/// Cox coefficients and the step baseline hazard.
struct ModelParams {
  BasisConfig basis;
  Eigen::MatrixXd alpha;   // J x c, raw basis
  Eigen::VectorXd beta;    // J, beta(0) = 1
  Eigen::MatrixXd theta0;  // c x L0, orthonormal basis
  Eigen::MatrixXd theta1;  // c x L1
  Eigen::VectorXd d0;      // L0
  Eigen::VectorXd d1;      // L1
  Eigen::VectorXd sigma2;  // J
  CoxCoefficients cox;
  BaselineHazard h0;

  int J() const { return static_cast<int>(beta.size()); }
  int c() const { return basis.c; }
  int L0() const { return static_cast<int>(theta0.cols()); }
  int L1() const { return static_cast<int>(theta1.cols()); }
  int K() const { return L0() + J() * L1(); }
  int P() const { return cox.P(); }

  /// Prior covariance of b: blockdiag(D0, D1, ..., D1).
  Eigen::VectorXd prior_variances() const;
};

/// Human-readable score labels: xi1.., zeta<j>_<l>.
std::vector<std::string> score_labels(int L0, int L1, int J);

struct FinalizedEigen {
  Eigen::MatrixXd theta;      // c x L, orthonormal columns
  Eigen::VectorXd d;          // descending, >= 0
  Eigen::MatrixXd gamma_map;  // maps gamma blocks from working to final coordinates
};

/// Eigendecomposition of Theta_w diag(d) Theta_w^T keeping L = cols(Theta_w)
/// pairs. With R = Theta^T Theta_w the scores transform as R b, so their
/// hazard coefficients transform as R^{-T} gamma.
FinalizedEigen finalize_eigen(const Eigen::MatrixXd& theta_work, const Eigen::VectorXd& d,
                              const Eigen::VectorXd& ortho_integrals);

/// Re-orthonormalises Theta through eigendecomposition of Theta D Theta^T,
/// clips D at 0 and orders it descending, pins beta_1 = 1, floors sigma^2 and
/// applies the sign rule. Rotates gamma_eta blocks consistently.
void enforce_invariants(ModelParams& p, const Eigen::VectorXd& ortho_integrals);

/// Describes which invariant fails, or empty when all hold.
std::string check_invariants(const ModelParams& p, double tol = 1e-8);

/// Flattened scalar parameters (h0 excluded) used for convergence checks.
Eigen::VectorXd flatten(const ModelParams& p);

/// Copy of `p` whose eigenfunction signs agree with `ref` (column-wise),
/// with matching gamma_eta entries flipped.
ModelParams sign_aligned(const ModelParams& p, const ModelParams& ref);

/// Evaluation helpers on a time grid.
Eigen::MatrixXd mean_curves(const ModelParams& p, const OrthonormalBasis& basis, const std::vector<double>& grid);
Eigen::MatrixXd eigenfunctions(const Eigen::MatrixXd& theta, const OrthonormalBasis& basis,
                               const std::vector<double>& grid);

}  // namespace fjm

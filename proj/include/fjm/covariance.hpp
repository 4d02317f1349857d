#pragma once

#include <vector>

#include <Eigen/Dense>

#include "fjm/data.hpp"
#include "fjm/splines.hpp"

namespace fjm {

enum class SurfaceKind { Auto, Cross, Shared, Specific };

/// Covariance function on [0, tau]^2 stored as c x c coefficients over the
/// orthonormal basis: C(s, t) = b~(s)^T A b~(t).
struct CovSurface {
  Eigen::MatrixXd coef;
  SurfaceKind kind = SurfaceKind::Auto;
  int j = 0;
  int jp = 0;

  double eval(const OrthonormalBasis& basis, double s, double t) const;
  /// Values on grid x grid.
  Eigen::MatrixXd on_grid(const OrthonormalBasis& basis, const std::vector<double>& grid) const;
};

struct EigenSystem {
  Eigen::VectorXd values;  // descending, >= 0
  Eigen::MatrixXd theta;   // c x (number returned)
  bool rank_deficient = false;
};

struct RawCovariances {
  /// surfaces[j][jp] for all ordered pairs; surfaces[jp][j] holds the transpose.
  std::vector<std::vector<CovSurface>> surfaces;
  Eigen::VectorXd sigma2;
  std::vector<double> lambda;  // selected smoothing parameter per unordered pair
};

/// Pools residual cross-products per outcome pair and smooths them with
/// tensor-product P-splines (diagonal s = t excluded for auto-covariances).
/// `alpha` holds raw-basis mean coefficients, one row per outcome.
RawCovariances raw_covariances(const JoinedData& data, const OrthonormalBasis& basis, const Eigen::MatrixXd& alpha);

struct Identified {
  Eigen::VectorXd beta;
  CovSurface C0;
  CovSurface C1;
  bool sign_ambiguous = false;  // J = 2 cross trace near zero
};

/// Least-squares solve of C_jj' = beta_j beta_j' C0 + 1{j=j'} beta_j^2 C1.
/// Inputs are orthonormal coefficient matrices C[j][jp]. Throws
/// DegenerateScaling when the cross-covariances carry no information.
Identified solve_identifiability(const std::vector<std::vector<Eigen::MatrixXd>>& C);

/// Flips each column so that int phi > 0 (first sizeable coefficient > 0 on
/// near-ties).
void apply_sign_rule(Eigen::MatrixXd& theta, const Eigen::VectorXd& ortho_integrals);

/// Eigenpairs of a symmetric coefficient matrix, negatives dropped, truncated
/// to L. Fewer than L positive eigenvalues sets rank_deficient.
EigenSystem eigendecompose(const Eigen::MatrixXd& coef, int L, const Eigen::VectorXd& ortho_integrals);

}  // namespace fjm

#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace fjm {

struct BasisConfig {
  int c = 9;        // basis dimension = interior knots + order
  int order = 4;    // 4 = cubic
  double tau = 1.0; // domain [0, tau]
};

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule with n nodes on [a, b].
Quadrature gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Equally spaced B-spline basis together with its Gram-orthonormalised
/// counterpart b~(t) = G^{-1/2} b(t).
class OrthonormalBasis {
 public:
  explicit OrthonormalBasis(const BasisConfig& cfg);

  const BasisConfig& config() const { return cfg_; }
  int c() const { return cfg_.c; }
  double tau() const { return cfg_.tau; }
  int interior_knots() const { return cfg_.c - cfg_.order; }
  /// Full knot vector with boundary knots repeated `order` times.
  const std::vector<double>& knots() const { return knots_; }
  /// Distinct breakpoints 0 = u_0 < ... < u_K = tau.
  std::vector<double> breakpoints() const;

  Eigen::VectorXd raw(double t) const;
  Eigen::VectorXd ortho(double t) const { return G_inv_sqrt_ * raw(t); }
  /// Row k is b(t_k)^T or b~(t_k)^T. Throws TimeOutOfDomain.
  Eigen::MatrixXd eval_matrix(const std::vector<double>& times, bool orthonormal) const;

  const Eigen::MatrixXd& gram() const { return G_; }
  const Eigen::MatrixXd& gram_inv_sqrt() const { return G_inv_sqrt_; }
  const Eigen::MatrixXd& gram_sqrt() const { return G_sqrt_; }
  /// int b(t) dt and int b~(t) dt.
  const Eigen::VectorXd& raw_integrals() const { return raw_int_; }
  const Eigen::VectorXd& ortho_integrals() const { return ortho_int_; }

  /// Composite Gauss-Legendre rule over the knot spans.
  Quadrature quadrature(int nodes_per_span) const;

 private:
  void basis_into(double t, double* out) const;

  BasisConfig cfg_;
  std::vector<double> knots_;
  Eigen::MatrixXd G_, G_inv_sqrt_, G_sqrt_;
  Eigen::VectorXd raw_int_, ortho_int_;
};

/// Throws SingularGram for degenerate configurations.
OrthonormalBasis build_basis(const BasisConfig& cfg);

/// round((sum m_i)^{1/5} + 4).
int default_c(std::size_t total_obs);

/// D^T D for the difference operator of the given order on c coefficients.
Eigen::MatrixXd difference_penalty(int c, int order);

struct SmoothFit {
  Eigen::VectorXd coef;  // raw-basis coefficients
  double lambda = 0.0;
  double gcv = 0.0;
  double edf = 0.0;
  bool ridge_used = false;
};

/// Log-spaced multipliers (relative to the trace ratio of design and penalty)
/// searched by GCV.
std::vector<double> gcv_lambda_grid();

/// P-spline fit of y on x with a difference penalty; smoothing parameter by
/// GCV. Throws InsufficientData for fewer than 4 points.
SmoothFit psmooth(const std::vector<double>& x, const std::vector<double>& y, const OrthonormalBasis& basis,
                  int penalty_order = 2);
SmoothFit psmooth(const std::vector<double>& x, const std::vector<double>& y, const BasisConfig& cfg,
                  int penalty_order = 2);

}  // namespace fjm

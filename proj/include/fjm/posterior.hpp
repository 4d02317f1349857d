#pragma once

#include <vector>

#include <Eigen/Dense>

namespace fjm {

/// Exponential-tilt moments of one subject's scores at a fixed gamma_eta:
/// E e^s, E b e^s, E b b^T e^s with s = b^T gamma_eta.
struct ExpMoments {
  double Ees = 1.0;
  Eigen::VectorXd Ebes;
  Eigen::MatrixXd Ebbes;
};

/// Weighted Monte Carlo representation of f(b_i | y_i, T_i, Delta_i). The
/// frozen sample is kept in standardised form b_q = mean + chol * z_q.
struct SubjectPosterior {
  Eigen::VectorXd Eb;
  Eigen::MatrixXd Ebb;
  ExpMoments tilt;  // at the gamma_eta used for the E-step weights
  double ess = 1.0;
  /// log of (1/Q) sum_q exp(Delta s_q - H0(T) e^{z'gz} e^{s_q}).
  double log_mean_weight = 0.0;
  double log_fy = 0.0;  // Gaussian log-density of the observed y_i

  Eigen::VectorXd mean;
  Eigen::MatrixXd chol;  // K x r, r = 0 for a point mass
  Eigen::MatrixXf z;     // r x Q
  Eigen::VectorXf w;     // Q normalised weights

  int K() const { return static_cast<int>(Eb.size()); }
  int Q() const { return static_cast<int>(w.size()); }
};

struct PosteriorMoments {
  std::vector<SubjectPosterior> subjects;
  int K = 0;
  int Q = 0;
  double min_ess = 0.0;

  int n() const { return static_cast<int>(subjects.size()); }
  /// Degenerate posterior concentrated at the given score vectors (K may be 0).
  static PosteriorMoments point_mass(const std::vector<Eigen::VectorXd>& scores, const Eigen::VectorXd& gamma_eta);
};

/// Tilt moments recomputed from the frozen sample at another gamma_eta.
ExpMoments tilt_moments(const SubjectPosterior& post, const Eigen::VectorXd& gamma_eta);
/// E_i s(gamma) and E_i e^{s(gamma)} from the frozen sample.
std::pair<double, double> linear_and_exp(const SubjectPosterior& post, const Eigen::VectorXd& gamma_eta);

}  // namespace fjm

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fjm/data.hpp"
#include "fjm/posterior.hpp"

namespace fjm {

/// Step baseline hazard with jumps at the distinct event times.
struct BaselineHazard {
  std::vector<double> times;  // ascending
  std::vector<double> jumps;
  std::vector<double> cum;    // cumulative hazard at each jump time

  /// H0(t): sum of jumps at times <= t.
  double cumulative(double t) const;
  /// Jump height at t, or 0 if t is not a jump time.
  double jump_at(double t) const;
  bool has_jump(double t) const;
  std::size_t size() const { return times.size(); }
};

enum class InformationKind { Louis, RiskSet };

std::string to_string(InformationKind kind);

struct CoxCoefficients {
  Eigen::VectorXd gamma_z;
  Eigen::VectorXd gamma_eta;
  Eigen::VectorXd se;        // length P + K, NaN for fixed entries
  Eigen::VectorXd p_values;  // two-sided normal
  std::string info_path;

  int P() const { return static_cast<int>(gamma_z.size()); }
  int K() const { return static_cast<int>(gamma_eta.size()); }
  Eigen::VectorXd stacked() const;
  void set_stacked(const Eigen::VectorXd& g);
};

/// Delta[log h0(T) + z'g_z + b'g_eta] - H0(T) exp(z'g_z + b'g_eta).
/// Throws EventTimeNotInJumps.
double survival_loglik(const SubjectView& subject, const Eigen::VectorXd& b, const BaselineHazard& h0,
                       const CoxCoefficients& coef);

/// Breslow estimator with E_i exp(b'g_eta) in the risk-set sums.
/// `tilt[i].Ees` must be evaluated at coef.gamma_eta. Throws EmptyRiskSet.
BaselineHazard breslow_update(const std::vector<SubjectView>& subjects, const std::vector<ExpMoments>& tilt,
                              const Eigen::VectorXd& gamma_z);

struct NewtonOptions {
  InformationKind information = InformationKind::Louis;
  bool damping = true;
  int max_halvings = 10;
  /// 1 = free, 0 = held at zero; length P + K (empty = all free).
  Eigen::VectorXi mask;
};

struct NewtonResult {
  CoxCoefficients coef;
  Eigen::VectorXd score;        // full length P + K at the input gamma
  Eigen::MatrixXd information;  // free block, used for the step
  InformationKind used = InformationKind::Louis;
  int halvings = 0;
};

/// Per-subject score contributions s_i at the input gamma (rows = subjects).
Eigen::MatrixXd subject_scores(const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                               const std::vector<ExpMoments>& tilt, const BaselineHazard& h0,
                               const Eigen::VectorXd& gamma_z);

/// sum_i s_i s_i^T - S S^T / n.
Eigen::MatrixXd louis_information(const Eigen::MatrixXd& scores);

/// sum_v d_v (W2/W0 - W1 W1^T / W0^2) over the risk sets.
Eigen::MatrixXd riskset_information(const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                                    const std::vector<ExpMoments>& tilt, const Eigen::VectorXd& gamma_z);

/// Expected survival log-likelihood with h0 profiled out (Breslow), up to a
/// constant; used for step damping.
double profile_q(const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                 const Eigen::VectorXd& gamma_z, const Eigen::VectorXd& gamma_eta);

/// One Newton-Raphson step for (gamma_z, gamma_eta). Throws SingularInformation.
NewtonResult newton_step(const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                         const std::vector<ExpMoments>& tilt, const BaselineHazard& h0, const CoxCoefficients& coef,
                         const NewtonOptions& options = {});

/// sqrt(diag(I^{-1})). Throws SingularInformation.
Eigen::VectorXd standard_errors(const Eigen::MatrixXd& information);

/// Two-sided normal p-value for estimate / se.
double normal_p_value(double estimate, double se);

/// Fills se and p_values for the free entries of coef.
void attach_inference(CoxCoefficients& coef, const Eigen::MatrixXd& information, const Eigen::VectorXi& mask,
                      InformationKind kind);

struct CoxFit {
  CoxCoefficients coef;
  BaselineHazard h0;
  int iterations = 0;
  double score_norm = 0.0;
  Eigen::MatrixXd information;
};

/// Cox partial-likelihood fit by iterated Newton steps (risk-set
/// information) with the posterior held fixed.
CoxFit fit_cox(const std::vector<SubjectView>& subjects, const PosteriorMoments& post, CoxCoefficients init,
               const Eigen::VectorXi& mask = {}, double tol = 1e-8, int max_iter = 50);

/// Harrell's C. Throws NoUsablePairs.
double concordance(const std::vector<double>& risk, const std::vector<double>& times, const std::vector<int>& events);

}  // namespace fjm

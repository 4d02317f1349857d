#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fjm/data.hpp"
#include "fjm/estep.hpp"
#include "fjm/params.hpp"
#include "fjm/posterior.hpp"
#include "fjm/scores.hpp"
#include "fjm/splines.hpp"

namespace fjm {

/// Observed rows of one (subject, outcome) pair with the quantities the
/// M-step reuses every iteration.
struct OutcomeBlock {
  Eigen::MatrixXd B;   // raw basis rows
  Eigen::MatrixXd Bt;  // orthonormal basis rows
  Eigen::MatrixXd A;   // Bt^T Bt
  Eigen::VectorXd y;
};

struct MStepData {
  std::vector<std::vector<OutcomeBlock>> blocks;  // [subject][outcome]
  std::vector<Eigen::MatrixXd> BtB;               // per outcome: sum_i B^T B
  Eigen::VectorXd N;                              // per outcome: observation count
  int J = 0;
  int c = 0;

  int n() const { return static_cast<int>(blocks.size()); }
};

MStepData build_mstep_data(const std::vector<SubjectView>& subjects, const std::vector<SubjectDesign>& designs);

/// d0_l = mean_i E xi_l^2, d1_l = mean_{i,j} E zeta_jl^2.
std::pair<Eigen::VectorXd, Eigen::VectorXd> mstep_variances(const PosteriorMoments& post, int L0, int L1, int J);

/// Expected residual sum of squares per outcome divided by the observation
/// count, floored at 1e-8.
Eigen::VectorXd mstep_sigma(const MStepData& data, const PosteriorMoments& post, const ModelParams& p);

/// Per-outcome least squares of y - beta_j B~ (Theta0 E xi + Theta1 E zeta_j)
/// on the raw basis. Throws SingularDesign.
Eigen::MatrixXd mstep_mean(const MStepData& data, const PosteriorMoments& post, const ModelParams& p);

struct ThetaUpdate {
  Eigen::MatrixXd theta0;  // working (not orthonormal)
  Eigen::MatrixXd theta1;
  int sweeps = 0;
  double last_change = 0.0;
};

/// Cyclic column updates of Theta0 then Theta1 until the largest coefficient
/// change falls below `tol` or `max_sweeps` is reached. Outcome j enters with
/// weight 1 / sigma2_j when `noise_weighted`, else with weight 1. Throws
/// InnerLoopDivergence after 5 consecutive growing sweeps.
ThetaUpdate mstep_theta(const MStepData& data, const PosteriorMoments& post, const ModelParams& p,
                        double tol = 1e-6, int max_sweeps = 50, bool noise_weighted = true);

struct EigenUpdate {
  FinalizedEigen shared;
  FinalizedEigen specific;
  int sweeps = 0;
};

/// mstep_theta followed by eigendecomposition of Theta D Theta^T.
EigenUpdate mstep_eigen(const MStepData& data, const PosteriorMoments& post, const ModelParams& p,
                        const Eigen::VectorXd& d0, const Eigen::VectorXd& d1, const Eigen::VectorXd& ortho_integrals);

/// Ratio update for beta_2..beta_J; beta_1 stays 1. Throws ZeroDenominator.
Eigen::VectorXd mstep_beta(const MStepData& data, const PosteriorMoments& post, const ModelParams& p);

/// sum_i E ||y_ij - mu_ij - beta_j B~ (Theta0 xi + Theta1 zeta_j)||^2 per
/// outcome, from the cached moments.
Eigen::VectorXd expected_rss(const MStepData& data, const PosteriorMoments& post, const ModelParams& p);

struct EmConfig {
  int burnin = 20;
  int Q_burnin = 500;
  int Q_main = 10000;
  int likelihood_Q = 10000;
  double delta0 = 0.001;
  double delta1 = 0.005;
  double delta2 = 0.001;
  double delta3 = 1e-7;
  int max_iter = 1000;
  /// A stopping rule must hold on this many consecutive post-burn-in
  /// iterations, so one lucky Monte Carlo sample cannot end the fit.
  int patience = 3;
  std::uint64_t seed = 1;
  InformationKind information = InformationKind::Louis;
  bool damping = true;
  bool noise_weighted_theta = true;
  Eigen::VectorXi gamma_mask;  // length P + K, empty = all free
};

struct MStepResult {
  ModelParams params;
  int inner_sweeps = 0;
  int halvings = 0;
  std::string info_path;
};

/// One full M-step on a frozen posterior sample.
MStepResult m_step(const MStepData& data, const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                   const ModelParams& p, const OrthonormalBasis& basis, const EmConfig& cfg);

struct TraceRow {
  int iteration = 0;
  int Q = 0;
  double loglik = 0.0;  // marginal log-likelihood at the parameters entering the iteration
  double rel_loglik_change = 0.0;
  double max_rel_change = 0.0;
  double max_abs_change = 0.0;
  double min_ess = 0.0;
  int inner_sweeps = 0;
  int halvings = 0;
  std::string info_path;
  double seconds = 0.0;
};

struct FitReport {
  double loglik = 0.0;        // sum_i log f(y_i, T_i, Delta_i)
  double neg2_loglik = 0.0;   // l_n
  int df = 0;
  double aic = 0.0;
  double bic = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  std::string info_path;
  std::vector<TraceRow> trace;
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

struct FitResult {
  ModelParams params;
  FitReport report;
  std::vector<Eigen::VectorXd> posterior_means;  // E(b_i | y_i, T_i, Delta_i) at the final E-step
};

using TraceCallback = std::function<void(const TraceRow&)>;

/// Monte Carlo EM from `init` until one of the three stopping rules holds
/// (checked after the burn-in iterations). On hitting max_iter the parameters
/// with the highest marginal likelihood are returned with converged = false.
FitResult fit(const JoinedData& data, const ModelParams& init, const EmConfig& cfg,
              const TraceCallback& on_iteration = {});

/// Louis information at the given posterior, with the risk-set fallback;
/// fills se / p-values in p.cox.
void attach_standard_errors(ModelParams& p, const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                            const Eigen::VectorXi& mask, InformationKind preferred);

/// Zeroes gamma entries whose mask is 0.
void apply_gamma_mask(CoxCoefficients& coef, const Eigen::VectorXi& mask);

}  // namespace fjm

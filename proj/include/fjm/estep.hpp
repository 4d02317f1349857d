#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fjm/data.hpp"
#include "fjm/params.hpp"
#include "fjm/posterior.hpp"
#include "fjm/rng.hpp"
#include "fjm/scores.hpp"

namespace fjm {

/// Survival quantities that enter the importance weights of one subject.
struct WeightInputs {
  int delta = 0;
  double hez = 0.0;  // H0(T_i) exp(z_i' gamma_z)
};

WeightInputs weight_inputs(const SubjectView& s, const ModelParams& p);

/// Fast kernel: draws z ~ N(0, I) in (q, k) order, weights
/// w_q ∝ exp(Delta s_q - hez e^{s_q}) with s_q = b_q' gamma_eta, and
/// accumulates all moments in z-space before mapping back through chol.
SubjectPosterior estep_subject(const GaussianConditional& cond, const WeightInputs& wi,
                               const Eigen::VectorXd& gamma_eta, int Q, const StreamKey& key, bool keep_sample = true);

/// Reference kernel: materialises every b_q from the same stream and forms the
/// weighted moments directly. Optionally returns the sample and log-weights.
SubjectPosterior estep_subject_reference(const GaussianConditional& cond, const WeightInputs& wi,
                                         const Eigen::VectorXd& gamma_eta, int Q, const StreamKey& key,
                                         Eigen::MatrixXd* sample_out = nullptr,
                                         Eigen::VectorXd* logw_out = nullptr);

/// Weighted moments of an explicit sample (columns) with log-weights.
SubjectPosterior moments_from_sample(const Eigen::MatrixXd& b, const Eigen::VectorXd& logw,
                                     const Eigen::VectorXd& gamma_eta);

struct EStepOptions {
  int Q = 10000;
  std::uint64_t seed = 1;
  std::uint64_t iteration = 0;
  bool keep_sample = true;
  bool reference = false;  // serial loop with the reference kernel
};

/// Monte Carlo E-step over all subjects. Subjects run in parallel; every
/// subject has its own stream, so the result does not depend on the thread
/// count. Throws DegenerateWeights, SingularMarginal.
PosteriorMoments e_step(const std::vector<SubjectView>& subjects, const std::vector<SubjectDesign>& designs,
                        const ModelParams& params, const EStepOptions& options);

/// log f(T_i, Delta_i | y_i) estimated by (1/Q) sum_q f(T_i, Delta_i | b_q)
/// with b_q ~ f(b | y_i); only the projection s = b' gamma_eta matters, so it
/// is drawn directly from N(m' gamma, gamma' S gamma).
double log_mean_survival(const SubjectView& s, const GaussianConditional& cond, const ModelParams& p, int Q,
                         const StreamKey& key);

struct MarginalLikelihood {
  double loglik = 0.0;
  std::vector<double> per_subject;
};

/// sum_i [log f(y_i) + log E f(T_i, Delta_i | b_i)] with one stream per
/// subject keyed by (seed, subject); repeated calls with the same seed reuse
/// the same random numbers.
MarginalLikelihood marginal_loglik(const std::vector<SubjectView>& subjects, const std::vector<SubjectDesign>& designs,
                                   const ModelParams& params, int Q, std::uint64_t seed);

}  // namespace fjm

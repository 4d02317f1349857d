#include "fjm/estep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fjm/error.hpp"

namespace fjm {

WeightInputs weight_inputs(const SubjectView& s, const ModelParams& p) {
  WeightInputs wi;
  wi.delta = s.delta;
  const double zg = p.cox.P() ? s.z.dot(p.cox.gamma_z) : 0.0;
  wi.hez = p.h0.cumulative(s.T) * std::exp(zg);
  return wi;
}

namespace {

void degenerate(double max_lw) {
  if (!std::isfinite(max_lw)) throw Error(Errc::DegenerateWeights, "all importance weights underflow");
}

// b = m + L x, E[b b^T] from E[x], E[x x^T]
void map_back(const Eigen::VectorXd& m, const Eigen::MatrixXd& L, double w0, const Eigen::VectorXd& x1,
              const Eigen::MatrixXd& x2, Eigen::VectorXd& b1, Eigen::MatrixXd& b2) {
  const Eigen::VectorXd Lx = L * x1;
  b1 = w0 * m + Lx;
  b2 = w0 * m * m.transpose() + m * Lx.transpose() + Lx * m.transpose() + L * x2 * L.transpose();
  b2 = 0.5 * (b2 + b2.transpose());
}

}  // namespace

SubjectPosterior estep_subject(const GaussianConditional& cond, const WeightInputs& wi,
                               const Eigen::VectorXd& gamma_eta, int Q, const StreamKey& key, bool keep_sample) {
  const int K = static_cast<int>(cond.mean.size());
  const Eigen::MatrixXd& L = cond.chol;
  const int R = static_cast<int>(L.cols());
  const double a = K ? cond.mean.dot(gamma_eta) : 0.0;
  const Eigen::VectorXd g = K ? Eigen::VectorXd(L.transpose() * gamma_eta) : Eigen::VectorXd::Zero(0);

  Engine eng = key.engine();
  NormalDist normal;
  Eigen::MatrixXd z(R, Q);
  std::vector<double> es(Q), lw(Q);
  double max_lw = -std::numeric_limits<double>::infinity();
  for (int q = 0; q < Q; ++q) {
    double* zq = z.col(q).data();
    double u = 0.0;
    for (int k = 0; k < R; ++k) {
      zq[k] = normal(eng);
      u += g(k) * zq[k];
    }
    const double sq = a + u;
    es[q] = std::exp(sq);
    lw[q] = wi.delta * sq - wi.hez * es[q];
    if (lw[q] > max_lw || std::isnan(lw[q])) max_lw = lw[q];
  }
  degenerate(max_lw);

  double W = 0.0, W2 = 0.0, Se = 0.0;
  Eigen::VectorXd Sz = Eigen::VectorXd::Zero(R), Sez = Eigen::VectorXd::Zero(R);
  Eigen::MatrixXd Szz = Eigen::MatrixXd::Zero(R, R), Sezz = Eigen::MatrixXd::Zero(R, R);
  std::vector<double> w(Q);
  for (int q = 0; q < Q; ++q) {
    const double wq = std::exp(lw[q] - max_lw);
    const double eq = wq * es[q];
    w[q] = wq;
    W += wq;
    W2 += wq * wq;
    Se += eq;
    const double* zq = z.col(q).data();
    for (int k = 0; k < R; ++k) {
      const double zk = zq[k];
      Sz(k) += wq * zk;
      Sez(k) += eq * zk;
      double* c1 = Szz.col(k).data();
      double* c2 = Sezz.col(k).data();
      const double wz = wq * zk, ez = eq * zk;
      for (int l = k; l < R; ++l) {
        c1[l] += wz * zq[l];
        c2[l] += ez * zq[l];
      }
    }
  }
  Szz = Szz.selfadjointView<Eigen::Lower>();
  Sezz = Sezz.selfadjointView<Eigen::Lower>();

  SubjectPosterior p;
  map_back(cond.mean, L, 1.0, Sz / W, Szz / W, p.Eb, p.Ebb);
  p.tilt.Ees = Se / W;
  map_back(cond.mean, L, p.tilt.Ees, Sez / W, Sezz / W, p.tilt.Ebes, p.tilt.Ebbes);
  if (K == 0) {
    p.Eb = Eigen::VectorXd::Zero(0);
    p.Ebb = Eigen::MatrixXd::Zero(0, 0);
  }
  p.ess = W * W / W2;
  p.log_mean_weight = max_lw + std::log(W / Q);
  p.log_fy = cond.log_fy;
  p.mean = cond.mean;
  p.chol = L;
  if (keep_sample) {
    p.z = z.cast<float>();
    p.w.resize(Q);
    for (int q = 0; q < Q; ++q) p.w(q) = static_cast<float>(w[q] / W);
  }
  return p;
}

SubjectPosterior moments_from_sample(const Eigen::MatrixXd& b, const Eigen::VectorXd& logw,
                                     const Eigen::VectorXd& gamma_eta) {
  const Eigen::Index K = b.rows();
  const Eigen::Index Q = b.cols();
  const double max_lw = logw.maxCoeff();
  degenerate(max_lw);
  SubjectPosterior p;
  p.Eb = Eigen::VectorXd::Zero(K);
  p.Ebb = Eigen::MatrixXd::Zero(K, K);
  p.tilt.Ees = 0.0;
  p.tilt.Ebes = Eigen::VectorXd::Zero(K);
  p.tilt.Ebbes = Eigen::MatrixXd::Zero(K, K);
  double W = 0.0, W2 = 0.0;
  for (Eigen::Index q = 0; q < Q; ++q) {
    const double wq = std::exp(logw(q) - max_lw);
    const double eq = wq * std::exp(K ? b.col(q).dot(gamma_eta) : 0.0);
    W += wq;
    W2 += wq * wq;
    p.Eb += wq * b.col(q);
    p.Ebb.noalias() += wq * b.col(q) * b.col(q).transpose();
    p.tilt.Ees += eq;
    p.tilt.Ebes += eq * b.col(q);
    p.tilt.Ebbes.noalias() += eq * b.col(q) * b.col(q).transpose();
  }
  p.Eb /= W;
  p.Ebb /= W;
  p.tilt.Ees /= W;
  p.tilt.Ebes /= W;
  p.tilt.Ebbes /= W;
  p.ess = W * W / W2;
  p.log_mean_weight = max_lw + std::log(W / static_cast<double>(Q));
  return p;
}

SubjectPosterior estep_subject_reference(const GaussianConditional& cond, const WeightInputs& wi,
                                         const Eigen::VectorXd& gamma_eta, int Q, const StreamKey& key,
                                         Eigen::MatrixXd* sample_out, Eigen::VectorXd* logw_out) {
  const Eigen::Index K = cond.mean.size();
  Engine eng = key.engine();
  NormalDist normal;
  Eigen::MatrixXd z(cond.chol.cols(), Q);
  for (int q = 0; q < Q; ++q)
    for (Eigen::Index k = 0; k < z.rows(); ++k) z(k, q) = normal(eng);
  Eigen::MatrixXd b = cond.chol * z;
  b.colwise() += cond.mean;
  Eigen::VectorXd logw(Q);
  for (int q = 0; q < Q; ++q) {
    const double s = K ? b.col(q).dot(gamma_eta) : 0.0;
    logw(q) = wi.delta * s - wi.hez * std::exp(s);
  }
  SubjectPosterior p = moments_from_sample(b, logw, gamma_eta);
  p.log_fy = cond.log_fy;
  p.mean = cond.mean;
  p.chol = cond.chol;
  const double max_lw = logw.maxCoeff();
  const Eigen::VectorXd w = (logw.array() - max_lw).exp();
  p.z = z.cast<float>();
  p.w = (w / w.sum()).cast<float>();
  if (sample_out) *sample_out = b;
  if (logw_out) *logw_out = logw;
  return p;
}

PosteriorMoments e_step(const std::vector<SubjectView>& subjects, const std::vector<SubjectDesign>& designs,
                        const ModelParams& params, const EStepOptions& options) {
  const int n = static_cast<int>(subjects.size());
  PosteriorMoments pm;
  pm.K = params.K();
  pm.Q = options.Q;
  pm.subjects.resize(n);

  auto one = [&](int i) {
    const GaussianConditional cond = conditional_moments(subjects[i], designs[i], params);
    const WeightInputs wi = weight_inputs(subjects[i], params);
    const StreamKey key{options.seed, options.iteration, static_cast<std::uint64_t>(i), StreamTag::EStep};
    pm.subjects[i] = options.reference
                         ? estep_subject_reference(cond, wi, params.cox.gamma_eta, options.Q, key)
                         : estep_subject(cond, wi, params.cox.gamma_eta, options.Q, key, options.keep_sample);
  };

  if (options.reference) {
    for (int i = 0; i < n; ++i) one(i);
  } else {
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4)
    for (int i = 0; i < n; ++i) {
      try {
        one(i);
      } catch (...) {
#pragma omp critical(fjm_estep_error)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  }

  pm.min_ess = std::numeric_limits<double>::infinity();
  for (const auto& s : pm.subjects) pm.min_ess = std::min(pm.min_ess, s.ess);
  return pm;
}

double log_mean_survival(const SubjectView& s, const GaussianConditional& cond, const ModelParams& p, int Q,
                         const StreamKey& key) {
  const WeightInputs wi = weight_inputs(s, p);
  const double zg = p.cox.P() ? s.z.dot(p.cox.gamma_z) : 0.0;
  double constant = 0.0;
  if (s.delta) {
    const double h = p.h0.jump_at(s.T);
    if (!(h > 0.0))
      throw Error(Errc::EventTimeNotInJumps, "event time of subject " + std::to_string(s.id) + " is not a jump");
    constant = std::log(h) + zg;
  }
  const int K = p.K();
  const double a = K ? cond.mean.dot(p.cox.gamma_eta) : 0.0;
  const double sd = K ? std::sqrt(std::max(p.cox.gamma_eta.dot(cond.cov * p.cox.gamma_eta), 0.0)) : 0.0;
  Engine eng = key.engine();
  NormalDist normal;
  std::vector<double> lw(Q);
  double max_lw = -std::numeric_limits<double>::infinity();
  for (int q = 0; q < Q; ++q) {
    const double sq = a + sd * normal(eng);
    lw[q] = wi.delta * sq - wi.hez * std::exp(sq);
    max_lw = std::max(max_lw, lw[q]);
  }
  degenerate(max_lw);
  double acc = 0.0;
  for (int q = 0; q < Q; ++q) acc += std::exp(lw[q] - max_lw);
  return constant + max_lw + std::log(acc / Q);
}

MarginalLikelihood marginal_loglik(const std::vector<SubjectView>& subjects, const std::vector<SubjectDesign>& designs,
                                   const ModelParams& params, int Q, std::uint64_t seed) {
  const int n = static_cast<int>(subjects.size());
  MarginalLikelihood out;
  out.per_subject.assign(n, 0.0);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < n; ++i) {
    try {
      const GaussianConditional cond = conditional_moments(subjects[i], designs[i], params);
      const StreamKey key{seed, 0, static_cast<std::uint64_t>(i), StreamTag::Likelihood};
      out.per_subject[i] = cond.log_fy + log_mean_survival(subjects[i], cond, params, Q, key);
    } catch (...) {
#pragma omp critical(fjm_loglik_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  for (double v : out.per_subject) out.loglik += v;
  return out;
}

}  // namespace fjm

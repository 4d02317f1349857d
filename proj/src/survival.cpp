#include "fjm/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fjm/error.hpp"

namespace fjm {

// -------------------------------------------------------------------------
// posterior helpers
// -------------------------------------------------------------------------

PosteriorMoments PosteriorMoments::point_mass(const std::vector<Eigen::VectorXd>& scores,
                                              const Eigen::VectorXd& gamma_eta) {
  PosteriorMoments pm;
  pm.K = scores.empty() ? 0 : static_cast<int>(scores.front().size());
  pm.Q = 1;
  pm.min_ess = 1.0;
  pm.subjects.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    SubjectPosterior& p = pm.subjects[i];
    const Eigen::VectorXd& b = scores[i];
    p.Eb = b;
    p.Ebb = b * b.transpose();
    p.mean = b;
    p.chol = Eigen::MatrixXd::Zero(b.size(), 0);
    p.z = Eigen::MatrixXf::Zero(0, 1);
    p.w = Eigen::VectorXf::Ones(1);
    p.tilt = tilt_moments(p, gamma_eta);
  }
  return pm;
}

ExpMoments tilt_moments(const SubjectPosterior& post, const Eigen::VectorXd& gamma_eta) {
  const Eigen::Index K = post.mean.size();
  ExpMoments m;
  m.Ees = 0.0;
  m.Ebes = Eigen::VectorXd::Zero(K);
  m.Ebbes = Eigen::MatrixXd::Zero(K, K);
  if (K == 0) {
    m.Ees = 1.0;
    return m;
  }
  double wsum = 0.0;
  Eigen::VectorXd b(K);
  for (int q = 0; q < post.Q(); ++q) {
    b = post.mean;
    if (post.chol.cols() > 0) b.noalias() += post.chol * post.z.col(q).cast<double>();
    const double w = post.w(q);
    const double e = w * std::exp(b.dot(gamma_eta));
    m.Ees += e;
    m.Ebes += e * b;
    m.Ebbes.noalias() += e * b * b.transpose();
    wsum += w;
  }
  m.Ees /= wsum;
  m.Ebes /= wsum;
  m.Ebbes /= wsum;
  return m;
}

std::pair<double, double> linear_and_exp(const SubjectPosterior& post, const Eigen::VectorXd& gamma_eta) {
  if (post.mean.size() == 0) return {0.0, 1.0};
  const double a = post.mean.dot(gamma_eta);
  if (post.chol.cols() == 0) return {a, std::exp(a)};
  const Eigen::VectorXf g = (post.chol.transpose() * gamma_eta).cast<float>();
  double lin = 0.0, ex = 0.0, wsum = 0.0;
  for (int q = 0; q < post.Q(); ++q) {
    const double u = static_cast<double>(g.dot(post.z.col(q)));
    const double w = post.w(q);
    lin += w * u;
    ex += w * std::exp(a + u);
    wsum += w;
  }
  return {a + lin / wsum, ex / wsum};
}

// -------------------------------------------------------------------------
// baseline hazard
// -------------------------------------------------------------------------

double BaselineHazard::cumulative(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return cum[static_cast<std::size_t>(it - times.begin()) - 1];
}

double BaselineHazard::jump_at(double t) const {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end() || *it != t) return 0.0;
  return jumps[static_cast<std::size_t>(it - times.begin())];
}

bool BaselineHazard::has_jump(double t) const { return std::binary_search(times.begin(), times.end(), t); }

std::string to_string(InformationKind kind) { return kind == InformationKind::Louis ? "louis" : "risk-set"; }

Eigen::VectorXd CoxCoefficients::stacked() const {
  Eigen::VectorXd g(P() + K());
  g << gamma_z, gamma_eta;
  return g;
}

void CoxCoefficients::set_stacked(const Eigen::VectorXd& g) {
  const int p = P();
  gamma_z = g.head(p);
  gamma_eta = g.tail(g.size() - p);
}

double survival_loglik(const SubjectView& subject, const Eigen::VectorXd& b, const BaselineHazard& h0,
                       const CoxCoefficients& coef) {
  const double eta = (coef.P() ? subject.z.dot(coef.gamma_z) : 0.0) + (coef.K() ? b.dot(coef.gamma_eta) : 0.0);
  double ll = -h0.cumulative(subject.T) * std::exp(eta);
  if (subject.delta) {
    if (!h0.has_jump(subject.T))
      throw Error(Errc::EventTimeNotInJumps, "event time of subject " + std::to_string(subject.id) + " is not a jump");
    ll += std::log(h0.jump_at(subject.T)) + eta;
  }
  return ll;
}

namespace {

// subject indices ordered by decreasing T
std::vector<int> by_time_desc(const std::vector<SubjectView>& subjects) {
  std::vector<int> order(subjects.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return subjects[a].T > subjects[b].T; });
  return order;
}

double exp_linear_z(const SubjectView& s, const Eigen::VectorXd& gamma_z) {
  return gamma_z.size() ? std::exp(s.z.dot(gamma_z)) : 1.0;
}

Eigen::VectorXi full_mask(const Eigen::VectorXi& mask, int D) {
  if (mask.size() == 0) return Eigen::VectorXi::Ones(D);
  if (mask.size() != D) throw Error(Errc::DimensionMismatch, "coefficient mask length differs from P + K");
  return mask;
}

std::vector<int> free_indices(const Eigen::VectorXi& mask) {
  std::vector<int> f;
  for (Eigen::Index k = 0; k < mask.size(); ++k)
    if (mask(k)) f.push_back(static_cast<int>(k));
  return f;
}

Eigen::MatrixXd restrict(const Eigen::MatrixXd& M, const std::vector<int>& f) {
  Eigen::MatrixXd R(f.size(), f.size());
  for (std::size_t a = 0; a < f.size(); ++a)
    for (std::size_t b = 0; b < f.size(); ++b) R(a, b) = M(f[a], f[b]);
  return R;
}

bool positive_definite(const Eigen::MatrixXd& M, Eigen::LLT<Eigen::MatrixXd>& llt) {
  if (M.size() == 0) return true;
  llt.compute(M);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::VectorXd d = llt.matrixLLT().diagonal();
  return d.minCoeff() > 1e-10 * d.maxCoeff();
}

}  // namespace

BaselineHazard breslow_update(const std::vector<SubjectView>& subjects, const std::vector<ExpMoments>& tilt,
                              const Eigen::VectorXd& gamma_z) {
  const std::vector<int> order = by_time_desc(subjects);
  BaselineHazard h;
  double W0 = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = subjects[order[k]].T;
    int events = 0;
    std::size_t e = k;
    for (; e < order.size() && subjects[order[e]].T == t; ++e) {
      const SubjectView& s = subjects[order[e]];
      W0 += exp_linear_z(s, gamma_z) * tilt[order[e]].Ees;
      events += s.delta;
    }
    if (events > 0) {
      if (!(W0 > 0.0) || !std::isfinite(W0)) throw Error(Errc::EmptyRiskSet, "risk set sum is not positive");
      h.times.push_back(t);
      h.jumps.push_back(events / W0);
    }
    k = e;
  }
  std::reverse(h.times.begin(), h.times.end());
  std::reverse(h.jumps.begin(), h.jumps.end());
  h.cum.resize(h.jumps.size());
  double acc = 0.0;
  for (std::size_t v = 0; v < h.jumps.size(); ++v) h.cum[v] = (acc += h.jumps[v]);
  return h;
}

Eigen::MatrixXd subject_scores(const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                               const std::vector<ExpMoments>& tilt, const BaselineHazard& h0,
                               const Eigen::VectorXd& gamma_z) {
  const int n = static_cast<int>(subjects.size());
  const int P = static_cast<int>(gamma_z.size());
  const int K = post.K;
  Eigen::MatrixXd S(n, P + K);
  for (int i = 0; i < n; ++i) {
    const SubjectView& s = subjects[i];
    const double Hez = h0.cumulative(s.T) * exp_linear_z(s, gamma_z);
    if (P) S.row(i).head(P) = (s.delta - Hez * tilt[i].Ees) * s.z.transpose();
    if (K) S.row(i).tail(K) = (s.delta * post.subjects[i].Eb - Hez * tilt[i].Ebes).transpose();
  }
  return S;
}

Eigen::MatrixXd louis_information(const Eigen::MatrixXd& scores) {
  const Eigen::VectorXd S = scores.colwise().sum().transpose();
  const double n = static_cast<double>(std::max<Eigen::Index>(scores.rows(), 1));
  Eigen::MatrixXd I = scores.transpose() * scores - S * S.transpose() / n;
  return 0.5 * (I + I.transpose());
}

Eigen::MatrixXd riskset_information(const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                                    const std::vector<ExpMoments>& tilt, const Eigen::VectorXd& gamma_z) {
  const int P = static_cast<int>(gamma_z.size());
  const int K = post.K;
  const int D = P + K;
  const std::vector<int> order = by_time_desc(subjects);
  double W0 = 0.0;
  Eigen::VectorXd W1 = Eigen::VectorXd::Zero(D);
  Eigen::MatrixXd W2 = Eigen::MatrixXd::Zero(D, D);
  Eigen::MatrixXd I = Eigen::MatrixXd::Zero(D, D);
  Eigen::VectorXd m1(D);
  Eigen::MatrixXd m2(D, D);
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = subjects[order[k]].T;
    int events = 0;
    std::size_t e = k;
    for (; e < order.size() && subjects[order[e]].T == t; ++e) {
      const int i = order[e];
      const SubjectView& s = subjects[i];
      const ExpMoments& em = tilt[i];
      const double ez = exp_linear_z(s, gamma_z);
      // moments of x = (z, b) weighted by e^{s}
      if (P) {
        m1.head(P) = em.Ees * s.z;
        m2.topLeftCorner(P, P) = em.Ees * s.z * s.z.transpose();
      }
      if (K) {
        m1.tail(K) = em.Ebes;
        m2.bottomRightCorner(K, K) = em.Ebbes;
        if (P) {
          m2.topRightCorner(P, K) = s.z * em.Ebes.transpose();
          m2.bottomLeftCorner(K, P) = em.Ebes * s.z.transpose();
        }
      }
      W0 += ez * em.Ees;
      W1 += ez * m1;
      W2 += ez * m2;
      events += s.delta;
    }
    if (events > 0) {
      if (!(W0 > 0.0)) throw Error(Errc::EmptyRiskSet, "risk set sum is not positive");
      I += events * (W2 / W0 - W1 * W1.transpose() / (W0 * W0));
    }
    k = e;
  }
  return 0.5 * (I + I.transpose());
}

double profile_q(const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                 const Eigen::VectorXd& gamma_z, const Eigen::VectorXd& gamma_eta) {
  const int n = static_cast<int>(subjects.size());
  std::vector<double> lin(n), ex(n);
  double q = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto [l, e] = linear_and_exp(post.subjects[i], gamma_eta);
    const double zg = gamma_z.size() ? subjects[i].z.dot(gamma_z) : 0.0;
    lin[i] = l;
    ex[i] = std::exp(zg) * e;
    if (subjects[i].delta) q += zg + l;
  }
  const std::vector<int> order = by_time_desc(subjects);
  double W0 = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = subjects[order[k]].T;
    int events = 0;
    std::size_t e = k;
    for (; e < order.size() && subjects[order[e]].T == t; ++e) {
      W0 += ex[order[e]];
      events += subjects[order[e]].delta;
    }
    if (events > 0) q -= events * std::log(W0);
    k = e;
  }
  return q;
}

NewtonResult newton_step(const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                         const std::vector<ExpMoments>& tilt, const BaselineHazard& h0, const CoxCoefficients& coef,
                         const NewtonOptions& options) {
  const int D = coef.P() + coef.K();
  const Eigen::VectorXi mask = full_mask(options.mask, D);
  const std::vector<int> f = free_indices(mask);

  NewtonResult res;
  res.coef = coef;
  const Eigen::MatrixXd s = subject_scores(subjects, post, tilt, h0, coef.gamma_z);
  res.score = s.colwise().sum().transpose();
  if (f.empty()) return res;

  Eigen::VectorXd Sf(f.size());
  for (std::size_t a = 0; a < f.size(); ++a) Sf(a) = res.score(f[a]);

  Eigen::LLT<Eigen::MatrixXd> llt;
  res.used = options.information;
  Eigen::MatrixXd I;
  if (options.information == InformationKind::Louis) {
    I = restrict(louis_information(s), f);
    if (!positive_definite(I, llt)) res.used = InformationKind::RiskSet;
  }
  if (res.used == InformationKind::RiskSet) {
    I = restrict(riskset_information(subjects, post, tilt, coef.gamma_z), f);
    if (!positive_definite(I, llt)) throw Error(Errc::SingularInformation, "information matrix is not positive definite");
  }
  res.information = I;
  res.coef.info_path = to_string(res.used);

  Eigen::VectorXd step = Eigen::VectorXd::Zero(D);
  const Eigen::VectorXd df = llt.solve(Sf);
  for (std::size_t a = 0; a < f.size(); ++a) step(f[a]) = df(a);

  const Eigen::VectorXd g0 = coef.stacked();
  if (!options.damping) {
    res.coef.set_stacked(g0 + step);
    return res;
  }
  const double q0 = profile_q(subjects, post, coef.gamma_z, coef.gamma_eta);
  double scale = 1.0;
  for (int h = 0; h <= options.max_halvings; ++h, scale *= 0.5) {
    CoxCoefficients trial = coef;
    trial.set_stacked(g0 + scale * step);
    const double q = profile_q(subjects, post, trial.gamma_z, trial.gamma_eta);
    if (std::isfinite(q) && q >= q0 - 1e-12 * std::abs(q0)) {
      res.coef.gamma_z = trial.gamma_z;
      res.coef.gamma_eta = trial.gamma_eta;
      res.halvings = h;
      return res;
    }
  }
  res.halvings = options.max_halvings + 1;  // no acceptable step: keep gamma
  return res;
}

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& information) {
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!positive_definite(information, llt)) throw Error(Errc::SingularInformation, "cannot invert information matrix");
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(information.rows(), information.cols()));
  return inv.diagonal().cwiseMax(0.0).cwiseSqrt();
}

double normal_p_value(double estimate, double se) {
  if (!(se > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::erfc(std::abs(estimate / se) / std::sqrt(2.0));
}

void attach_inference(CoxCoefficients& coef, const Eigen::MatrixXd& information, const Eigen::VectorXi& mask_in,
                      InformationKind kind) {
  const int D = coef.P() + coef.K();
  const Eigen::VectorXi mask = full_mask(mask_in, D);
  const std::vector<int> f = free_indices(mask);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  coef.se = Eigen::VectorXd::Constant(D, nan);
  coef.p_values = Eigen::VectorXd::Constant(D, nan);
  coef.info_path = to_string(kind);
  if (f.empty()) return;
  const Eigen::MatrixXd I = information.rows() == D ? restrict(information, f) : information;
  const Eigen::VectorXd se = standard_errors(I);
  const Eigen::VectorXd g = coef.stacked();
  for (std::size_t a = 0; a < f.size(); ++a) {
    coef.se(f[a]) = se(a);
    coef.p_values(f[a]) = normal_p_value(g(f[a]), se(a));
  }
}

CoxFit fit_cox(const std::vector<SubjectView>& subjects, const PosteriorMoments& post, CoxCoefficients init,
               const Eigen::VectorXi& mask_in, double tol, int max_iter) {
  const int D = init.P() + init.K();
  const Eigen::VectorXi mask = full_mask(mask_in, D);
  for (int k = 0; k < D; ++k)
    if (!mask(k)) {
      Eigen::VectorXd g = init.stacked();
      g(k) = 0.0;
      init.set_stacked(g);
    }
  const std::vector<int> f = free_indices(mask);

  auto tilts = [&](const Eigen::VectorXd& ge) {
    std::vector<ExpMoments> t(subjects.size());
    for (std::size_t i = 0; i < subjects.size(); ++i) t[i] = tilt_moments(post.subjects[i], ge);
    return t;
  };

  CoxFit out;
  out.coef = init;
  NewtonOptions opt;
  opt.information = InformationKind::RiskSet;
  opt.mask = mask;
  for (int it = 0;; ++it) {
    const std::vector<ExpMoments> t = tilts(out.coef.gamma_eta);
    out.h0 = breslow_update(subjects, t, out.coef.gamma_z);
    const Eigen::MatrixXd s = subject_scores(subjects, post, t, out.h0, out.coef.gamma_z);
    const Eigen::VectorXd S = s.colwise().sum().transpose();
    double norm2 = 0.0;
    for (int k : f) norm2 += S(k) * S(k);
    out.score_norm = std::sqrt(norm2);
    out.iterations = it;
    if (out.score_norm < tol || it >= max_iter || f.empty()) {
      out.information = riskset_information(subjects, post, t, out.coef.gamma_z);
      break;
    }
    const NewtonResult r = newton_step(subjects, post, t, out.h0, out.coef, opt);
    out.coef.gamma_z = r.coef.gamma_z;
    out.coef.gamma_eta = r.coef.gamma_eta;
    if (r.halvings > opt.max_halvings) {
      out.information = riskset_information(subjects, post, t, out.coef.gamma_z);
      break;
    }
  }
  if (!f.empty()) attach_inference(out.coef, out.information, mask, InformationKind::RiskSet);
  return out;
}

double concordance(const std::vector<double>& risk, const std::vector<double>& times, const std::vector<int>& events) {
  const std::size_t n = risk.size();
  if (times.size() != n || events.size() != n) throw Error(Errc::DimensionMismatch, "concordance inputs differ in length");
  double concordant = 0.0;
  std::size_t usable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!events[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (!(times[i] < times[j])) continue;
      ++usable;
      if (risk[i] > risk[j]) concordant += 1.0;
      else if (risk[i] == risk[j]) concordant += 0.5;
    }
  }
  if (usable == 0) throw Error(Errc::NoUsablePairs, "no usable pairs for concordance");
  return concordant / static_cast<double>(usable);
}

}  // namespace fjm

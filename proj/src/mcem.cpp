#include "fjm/mcem.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "fjm/error.hpp"
#include "fjm/selection.hpp"

namespace fjm {

MStepData build_mstep_data(const std::vector<SubjectView>& subjects, const std::vector<SubjectDesign>& designs) {
  MStepData d;
  d.J = subjects.empty() ? 0 : subjects.front().J();
  d.c = designs.empty() ? 0 : static_cast<int>(designs.front().B.cols());
  d.BtB.assign(d.J, Eigen::MatrixXd::Zero(d.c, d.c));
  d.N = Eigen::VectorXd::Zero(d.J);
  d.blocks.resize(subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const SubjectView& s = subjects[i];
    d.blocks[i].resize(d.J);
    for (int j = 0; j < d.J; ++j) {
      OutcomeBlock& ob = d.blocks[i][j];
      const std::vector<int>& rows = s.observed[j];
      const int m = static_cast<int>(rows.size());
      ob.B.resize(m, d.c);
      ob.Bt.resize(m, d.c);
      ob.y.resize(m);
      for (int r = 0; r < m; ++r) {
        ob.B.row(r) = designs[i].B.row(rows[r]);
        ob.Bt.row(r) = designs[i].Bt.row(rows[r]);
        ob.y(r) = s.values(j, rows[r]);
      }
      ob.A = ob.Bt.transpose() * ob.Bt;
      d.BtB[j].noalias() += ob.B.transpose() * ob.B;
      d.N(j) += m;
    }
  }
  return d;
}

namespace {

/// Moments of (xi, zeta_j) for one subject.
struct OutcomeMoments {
  Eigen::VectorXd m;
  Eigen::MatrixXd S;
};

std::vector<int> outcome_index(int L0, int L1, int j) {
  std::vector<int> idx;
  for (int l = 0; l < L0; ++l) idx.push_back(l);
  for (int l = 0; l < L1; ++l) idx.push_back(L0 + j * L1 + l);
  return idx;
}

OutcomeMoments outcome_moments(const SubjectPosterior& sp, const std::vector<int>& idx) {
  const int k = static_cast<int>(idx.size());
  OutcomeMoments om;
  om.m.resize(k);
  om.S.resize(k, k);
  for (int a = 0; a < k; ++a) {
    om.m(a) = sp.Eb(idx[a]);
    for (int b = 0; b < k; ++b) om.S(a, b) = sp.Ebb(idx[a], idx[b]);
  }
  return om;
}

Eigen::MatrixXd loadings(const ModelParams& p) {
  Eigen::MatrixXd M(p.c(), p.L0() + p.L1());
  M << p.theta0, p.theta1;
  return M;
}

}  // namespace

std::pair<Eigen::VectorXd, Eigen::VectorXd> mstep_variances(const PosteriorMoments& post, int L0, int L1, int J) {
  Eigen::VectorXd d0 = Eigen::VectorXd::Zero(L0), d1 = Eigen::VectorXd::Zero(L1);
  const int n = post.n();
  for (const SubjectPosterior& sp : post.subjects) {
    for (int l = 0; l < L0; ++l) d0(l) += sp.Ebb(l, l);
    for (int j = 0; j < J; ++j)
      for (int l = 0; l < L1; ++l) d1(l) += sp.Ebb(L0 + j * L1 + l, L0 + j * L1 + l);
  }
  if (n > 0) {
    d0 /= n;
    if (J > 0) d1 /= static_cast<double>(n) * J;
  }
  return {d0, d1};
}

Eigen::VectorXd expected_rss(const MStepData& data, const PosteriorMoments& post, const ModelParams& p) {
  const Eigen::MatrixXd M = loadings(p);
  Eigen::VectorXd rss = Eigen::VectorXd::Zero(data.J);
  for (int j = 0; j < data.J; ++j) {
    const std::vector<int> idx = outcome_index(p.L0(), p.L1(), j);
    const double b = p.beta(j);
    for (int i = 0; i < data.n(); ++i) {
      const OutcomeBlock& ob = data.blocks[i][j];
      if (ob.y.size() == 0) continue;
      const OutcomeMoments om = outcome_moments(post.subjects[i], idx);
      const Eigen::VectorXd r = ob.y - ob.B * p.alpha.row(j).transpose();
      const Eigen::VectorXd v = ob.Bt.transpose() * r;
      const Eigen::MatrixXd AM = ob.A * M;
      rss(j) += r.squaredNorm() - 2.0 * b * v.dot(M * om.m) + b * b * (M.transpose() * AM).cwiseProduct(om.S).sum();
    }
  }
  return rss;
}

Eigen::VectorXd mstep_sigma(const MStepData& data, const PosteriorMoments& post, const ModelParams& p) {
  const Eigen::VectorXd rss = expected_rss(data, post, p);
  Eigen::VectorXd s(data.J);
  for (int j = 0; j < data.J; ++j) s(j) = std::max(data.N(j) > 0 ? rss(j) / data.N(j) : 0.0, 1e-8);
  return s;
}

Eigen::MatrixXd mstep_mean(const MStepData& data, const PosteriorMoments& post, const ModelParams& p) {
  const Eigen::MatrixXd M = loadings(p);
  Eigen::MatrixXd alpha(data.J, data.c);
  for (int j = 0; j < data.J; ++j) {
    const std::vector<int> idx = outcome_index(p.L0(), p.L1(), j);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(data.c);
    for (int i = 0; i < data.n(); ++i) {
      const OutcomeBlock& ob = data.blocks[i][j];
      if (ob.y.size() == 0) continue;
      Eigen::VectorXd m(idx.size());
      for (std::size_t a = 0; a < idx.size(); ++a) m(a) = post.subjects[i].Eb(idx[a]);
      rhs.noalias() += ob.B.transpose() * (ob.y - p.beta(j) * (ob.Bt * (M * m)));
    }
    Eigen::MatrixXd G = data.BtB[j];
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
      G.diagonal().array() += 1e-10 * std::max(G.trace() / data.c, 1e-300);
      llt.compute(G);
      if (llt.info() != Eigen::Success)
        throw Error(Errc::SingularDesign, "mean design of outcome " + std::to_string(j + 1) + " is singular");
    }
    alpha.row(j) = llt.solve(rhs).transpose();
  }
  return alpha;
}

ThetaUpdate mstep_theta(const MStepData& data, const PosteriorMoments& post, const ModelParams& p, double tol,
                        int max_sweeps, bool noise_weighted) {
  const int n = data.n(), J = data.J, c = data.c;
  const int L0 = p.L0(), L1 = p.L1();
  ThetaUpdate out;
  out.theta0 = p.theta0;
  out.theta1 = p.theta1;
  if (L0 + L1 == 0) return out;

  // w_j = 1 / sigma2_j makes each column update exact for the Gaussian
  // likelihood; a common weight cancels.
  Eigen::VectorXd w = Eigen::VectorXd::Ones(J);
  if (noise_weighted)
    for (int j = 0; j < J; ++j)
      if (p.sigma2(j) > 0.0 && std::isfinite(p.sigma2(j))) w(j) = 1.0 / p.sigma2(j);

  // subject-level pieces that do not change during the sweeps
  std::vector<Eigen::MatrixXd> Abar(n);
  std::vector<Eigen::VectorXd> vbar(n);
  std::vector<std::vector<Eigen::VectorXd>> v(n, std::vector<Eigen::VectorXd>(J));
  for (int i = 0; i < n; ++i) {
    Abar[i] = Eigen::MatrixXd::Zero(c, c);
    vbar[i] = Eigen::VectorXd::Zero(c);
    for (int j = 0; j < J; ++j) {
      const OutcomeBlock& ob = data.blocks[i][j];
      v[i][j] = ob.Bt.transpose() * (ob.y - ob.B * p.alpha.row(j).transpose());
      Abar[i].noalias() += w(j) * p.beta(j) * p.beta(j) * ob.A;
      vbar[i].noalias() += w(j) * p.beta(j) * v[i][j];
    }
  }

  auto solve = [&](const Eigen::MatrixXd& lhs, const Eigen::VectorXd& rhs, const Eigen::VectorXd& old) {
    if (!(lhs.trace() > 0.0)) return Eigen::VectorXd(old);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
    if (ldlt.info() != Eigen::Success) return Eigen::VectorXd(old);
    Eigen::VectorXd x = ldlt.solve(rhs);
    return x.allFinite() ? x : Eigen::VectorXd(old);
  };

  double prev_change = std::numeric_limits<double>::infinity();
  int growing = 0;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    const Eigen::MatrixXd T0 = out.theta0, T1 = out.theta1;
    for (int k = 0; k < L0; ++k) {
      Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(c, c);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(c);
      for (int i = 0; i < n; ++i) {
        const SubjectPosterior& sp = post.subjects[i];
        lhs.noalias() += sp.Ebb(k, k) * Abar[i];
        rhs.noalias() += sp.Eb(k) * vbar[i];
        Eigen::VectorXd other = Eigen::VectorXd::Zero(c);
        for (int l = 0; l < L0; ++l)
          if (l != k) other.noalias() += out.theta0.col(l) * sp.Ebb(l, k);
        rhs.noalias() -= Abar[i] * other;
        for (int j = 0; j < J && L1; ++j) {
          const Eigen::VectorXd cross = out.theta1 * sp.Ebb.block(L0 + j * L1, k, L1, 1);
          rhs.noalias() -= w(j) * p.beta(j) * p.beta(j) * (data.blocks[i][j].A * cross);
        }
      }
      out.theta0.col(k) = solve(lhs, rhs, out.theta0.col(k));
    }
    for (int k = 0; k < L1; ++k) {
      Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(c, c);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(c);
      for (int i = 0; i < n; ++i) {
        const SubjectPosterior& sp = post.subjects[i];
        for (int j = 0; j < J; ++j) {
          const int col = L0 + j * L1 + k;
          const double b = p.beta(j), wb = w(j) * b;
          const Eigen::MatrixXd& A = data.blocks[i][j].A;
          lhs.noalias() += wb * b * sp.Ebb(col, col) * A;
          Eigen::VectorXd inner = Eigen::VectorXd::Zero(c);
          if (L0) inner.noalias() += out.theta0 * sp.Ebb.block(0, col, L0, 1);
          for (int l = 0; l < L1; ++l)
            if (l != k) inner.noalias() += out.theta1.col(l) * sp.Ebb(L0 + j * L1 + l, col);
          rhs.noalias() += wb * sp.Eb(col) * v[i][j] - wb * b * (A * inner);
        }
      }
      out.theta1.col(k) = solve(lhs, rhs, out.theta1.col(k));
    }
    double change = 0.0;
    if (L0) change = std::max(change, (out.theta0 - T0).cwiseAbs().maxCoeff());
    if (L1) change = std::max(change, (out.theta1 - T1).cwiseAbs().maxCoeff());
    out.sweeps = sweep;
    out.last_change = change;
    if (change < tol) break;
    growing = change > prev_change ? growing + 1 : 0;
    if (growing >= 5) throw Error(Errc::InnerLoopDivergence, "eigenfunction updates grew for 5 consecutive sweeps");
    prev_change = change;
  }
  return out;
}

EigenUpdate mstep_eigen(const MStepData& data, const PosteriorMoments& post, const ModelParams& p,
                        const Eigen::VectorXd& d0, const Eigen::VectorXd& d1, const Eigen::VectorXd& ortho_integrals) {
  const ThetaUpdate th = mstep_theta(data, post, p);
  EigenUpdate out;
  out.shared = finalize_eigen(th.theta0, d0, ortho_integrals);
  out.specific = finalize_eigen(th.theta1, d1, ortho_integrals);
  out.sweeps = th.sweeps;
  return out;
}

Eigen::VectorXd mstep_beta(const MStepData& data, const PosteriorMoments& post, const ModelParams& p) {
  const Eigen::MatrixXd M = loadings(p);
  Eigen::VectorXd beta = p.beta;
  if (beta.size()) beta(0) = 1.0;
  for (int j = 1; j < data.J; ++j) {
    const std::vector<int> idx = outcome_index(p.L0(), p.L1(), j);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < data.n(); ++i) {
      const OutcomeBlock& ob = data.blocks[i][j];
      if (ob.y.size() == 0) continue;
      const OutcomeMoments om = outcome_moments(post.subjects[i], idx);
      const Eigen::VectorXd r = ob.y - ob.B * p.alpha.row(j).transpose();
      num += (ob.Bt * (M * om.m)).dot(r);
      den += (M.transpose() * ob.A * M).cwiseProduct(om.S).sum();
    }
    if (!(std::abs(den) > 1e-300) || !std::isfinite(num / den))
      throw Error(Errc::ZeroDenominator, "scaling update for outcome " + std::to_string(j + 1) + " has zero denominator");
    beta(j) = num / den;
  }
  return beta;
}

void apply_gamma_mask(CoxCoefficients& coef, const Eigen::VectorXi& mask) {
  if (mask.size() == 0) return;
  if (mask.size() != coef.P() + coef.K()) throw Error(Errc::DimensionMismatch, "gamma mask length differs from P + K");
  Eigen::VectorXd g = coef.stacked();
  for (Eigen::Index k = 0; k < g.size(); ++k)
    if (!mask(k)) g(k) = 0.0;
  coef.set_stacked(g);
}

namespace {

std::vector<ExpMoments> posterior_tilts(const PosteriorMoments& post) {
  std::vector<ExpMoments> t(post.subjects.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = post.subjects[i].tilt;
  return t;
}

}  // namespace

MStepResult m_step(const MStepData& data, const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                   const ModelParams& p, const OrthonormalBasis& basis, const EmConfig& cfg) {
  const int L0 = p.L0(), L1 = p.L1(), J = p.J();
  MStepResult res;
  ModelParams& q = res.params;
  q = p;

  const auto [d0, d1] = mstep_variances(post, L0, L1, J);
  q.sigma2 = mstep_sigma(data, post, p);
  q.alpha = mstep_mean(data, post, p);

  ModelParams work = p;
  work.alpha = q.alpha;
  work.sigma2 = q.sigma2;
  const ThetaUpdate th = mstep_theta(data, post, work, 1e-6, 50, cfg.noise_weighted_theta);
  work.theta0 = th.theta0;
  work.theta1 = th.theta1;
  res.inner_sweeps = th.sweeps;
  q.beta = mstep_beta(data, post, work);

  const FinalizedEigen f0 = finalize_eigen(th.theta0, d0, basis.ortho_integrals());
  const FinalizedEigen f1 = finalize_eigen(th.theta1, d1, basis.ortho_integrals());
  q.theta0 = f0.theta;
  q.d0 = f0.d;
  q.theta1 = f1.theta;
  q.d1 = f1.d;

  // survival part in the coordinates of the frozen sample
  const std::vector<ExpMoments> tilt = posterior_tilts(post);
  q.h0 = breslow_update(subjects, tilt, p.cox.gamma_z);
  NewtonOptions opt;
  opt.information = cfg.information;
  opt.damping = cfg.damping;
  opt.mask = cfg.gamma_mask;
  const NewtonResult nr = newton_step(subjects, post, tilt, q.h0, p.cox, opt);
  res.halvings = nr.halvings;
  res.info_path = to_string(nr.used);
  q.cox.gamma_z = nr.coef.gamma_z;
  q.cox.gamma_eta = nr.coef.gamma_eta;
  if (L0) q.cox.gamma_eta.head(L0) = f0.gamma_map * nr.coef.gamma_eta.head(L0);
  for (int j = 0; j < J && L1; ++j)
    q.cox.gamma_eta.segment(L0 + j * L1, L1) = f1.gamma_map * nr.coef.gamma_eta.segment(L0 + j * L1, L1);
  apply_gamma_mask(q.cox, cfg.gamma_mask);

  if (J) q.beta(0) = 1.0;
  q.sigma2 = q.sigma2.cwiseMax(1e-8);
  return res;
}

void attach_standard_errors(ModelParams& p, const std::vector<SubjectView>& subjects, const PosteriorMoments& post,
                            const Eigen::VectorXi& mask, InformationKind preferred) {
  const std::vector<ExpMoments> tilt = posterior_tilts(post);
  if (preferred == InformationKind::Louis) {
    try {
      const Eigen::MatrixXd s = subject_scores(subjects, post, tilt, p.h0, p.cox.gamma_z);
      attach_inference(p.cox, louis_information(s), mask, InformationKind::Louis);
      return;
    } catch (const Error& e) {
      if (e.code() != Errc::SingularInformation) throw;
    }
  }
  attach_inference(p.cox, riskset_information(subjects, post, tilt, p.cox.gamma_z), mask, InformationKind::RiskSet);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

FitResult fit(const JoinedData& data, const ModelParams& init, const EmConfig& cfg, const TraceCallback& on_iteration) {
  const auto t_start = std::chrono::steady_clock::now();
  const std::vector<SubjectView>& subjects = data.subjects;
  const OrthonormalBasis basis(init.basis);
  const std::vector<SubjectDesign> designs = build_designs(subjects, basis);
  const MStepData mdata = build_mstep_data(subjects, designs);

  ModelParams params = init;
  enforce_invariants(params, basis.ortho_integrals());
  apply_gamma_mask(params.cox, cfg.gamma_mask);
  if (params.h0.size() == 0) {
    // start the hazard from the plug-in scores
    std::vector<Eigen::VectorXd> means(subjects.size());
    for (std::size_t i = 0; i < subjects.size(); ++i)
      means[i] = conditional_moments(subjects[i], designs[i], params).mean;
    const PosteriorMoments pm = PosteriorMoments::point_mass(means, params.cox.gamma_eta);
    params.h0 = breslow_update(subjects, posterior_tilts(pm), params.cox.gamma_z);
  }

  FitResult result;
  FitReport& rep = result.report;
  rep.seed = cfg.seed;

  ModelParams best = params;
  double best_ll = -std::numeric_limits<double>::infinity();
  double prev_ll = std::numeric_limits<double>::quiet_NaN();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const int patience = std::max(cfg.patience, 1);
  int ll_streak = 0, rel_streak = 0, abs_streak = 0;

  int l = 1;
  for (;; ++l) {
    if (l > cfg.max_iter) {
      params = best;
      rep.stop_reason = "max-iterations";
      rep.converged = false;
      break;
    }
    const auto t_iter = std::chrono::steady_clock::now();
    TraceRow row;
    row.iteration = l;
    row.Q = l <= cfg.burnin ? cfg.Q_burnin : cfg.Q_main;
    row.loglik = marginal_loglik(subjects, designs, params, cfg.likelihood_Q, cfg.seed).loglik;
    row.rel_loglik_change = std::isnan(prev_ll) ? nan : std::abs(row.loglik - prev_ll) / (std::abs(prev_ll) + cfg.delta0);
    if (row.loglik > best_ll) {
      best_ll = row.loglik;
      best = params;
    }
    ll_streak = l > cfg.burnin + 1 && row.rel_loglik_change < cfg.delta3 ? ll_streak + 1 : 0;
    if (ll_streak >= patience) {
      row.max_rel_change = nan;
      row.max_abs_change = nan;
      row.seconds = seconds_since(t_iter);
      rep.trace.push_back(row);
      if (on_iteration) on_iteration(row);
      rep.stop_reason = "likelihood";
      rep.converged = true;
      break;
    }

    EStepOptions eo;
    eo.Q = row.Q;
    eo.seed = cfg.seed;
    eo.iteration = static_cast<std::uint64_t>(l);
    const PosteriorMoments post = e_step(subjects, designs, params, eo);
    row.min_ess = post.min_ess;

    MStepResult ms = m_step(mdata, subjects, post, params, basis, cfg);
    row.inner_sweeps = ms.inner_sweeps;
    row.halvings = ms.halvings;
    row.info_path = ms.info_path;

    const Eigen::VectorXd before = flatten(params);
    const Eigen::VectorXd diff = flatten(sign_aligned(ms.params, params)) - before;
    row.max_abs_change = diff.size() ? diff.cwiseAbs().maxCoeff() : 0.0;
    row.max_rel_change =
        diff.size() ? (diff.cwiseAbs().array() / (before.cwiseAbs().array() + cfg.delta0)).maxCoeff() : 0.0;
    row.seconds = seconds_since(t_iter);
    rep.trace.push_back(row);
    if (on_iteration) on_iteration(row);

    params = std::move(ms.params);
    prev_ll = row.loglik;
    rel_streak = l > cfg.burnin && row.max_rel_change < cfg.delta1 ? rel_streak + 1 : 0;
    abs_streak = l > cfg.burnin && row.max_abs_change < cfg.delta2 ? abs_streak + 1 : 0;
    if (rel_streak >= patience || abs_streak >= patience) {
      rep.stop_reason = rel_streak >= patience ? "relative-change" : "absolute-change";
      rep.converged = true;
      break;
    }
  }
  rep.iterations = static_cast<int>(rep.trace.size());

  // final E-step: refreshed hazard, standard errors and posterior means
  EStepOptions eo;
  eo.Q = cfg.Q_main;
  eo.seed = cfg.seed;
  eo.iteration = static_cast<std::uint64_t>(l) + 1;
  const PosteriorMoments post = e_step(subjects, designs, params, eo);
  params.h0 = breslow_update(subjects, posterior_tilts(post), params.cox.gamma_z);
  attach_standard_errors(params, subjects, post, cfg.gamma_mask, cfg.information);
  rep.info_path = params.cox.info_path;
  result.posterior_means.resize(subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) result.posterior_means[i] = post.subjects[i].Eb;

  rep.loglik = marginal_loglik(subjects, designs, params, cfg.likelihood_Q, cfg.seed).loglik;
  rep.neg2_loglik = -2.0 * rep.loglik;
  rep.df = degrees_of_freedom(params.J(), params.c(), params.L0(), params.L1(), params.P());
  rep.aic = aic(rep.neg2_loglik, rep.df);
  rep.bic = bic(rep.neg2_loglik, rep.df, data.n());
  result.params = std::move(params);
  rep.seconds = seconds_since(t_start);
  return result;
}

}  // namespace fjm

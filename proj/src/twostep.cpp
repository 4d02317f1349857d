#include "fjm/twostep.hpp"

#include <algorithm>

#include "fjm/error.hpp"
#include "fjm/scores.hpp"
#include "fjm/survival.hpp"

namespace fjm {

namespace {

Eigen::VectorXd positive_spectrum(const Eigen::MatrixXd& coef) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (coef + coef.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().reverse();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  int k = 0;
  while (k < ev.size() && ev(k) > 1e-12 * top) ++k;
  return ev.head(k);
}

// Truncated eigenpairs; missing directions are filled with the next
// eigenvectors at a small positive variance.
void truncated_eigen(const Eigen::MatrixXd& coef, int L, const Eigen::VectorXd& ortho_int, Eigen::MatrixXd& theta,
                     Eigen::VectorXd& d, bool& padded) {
  EigenSystem es = eigendecompose(coef, L, ortho_int);
  const int have = static_cast<int>(es.values.size());
  if (have == L) {
    theta = es.theta;
    d = es.values;
    return;
  }
  padded = true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(0.5 * (coef + coef.transpose()));
  const Eigen::Index c = coef.rows();
  theta.resize(c, L);
  d.resize(L);
  const double fill = have ? std::min(1e-3 * es.values(0), es.values(have - 1)) : 1e-3;
  for (int k = 0; k < L; ++k) {
    theta.col(k) = full.eigenvectors().col(c - 1 - k);
    d(k) = k < have ? es.values(k) : fill;
  }
  apply_sign_rule(theta, ortho_int);
}

}  // namespace

int pve_rank(const Eigen::VectorXd& spectrum, double threshold) {
  const double total = spectrum.sum();
  if (spectrum.size() == 0 || !(total > 0.0)) return 0;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < spectrum.size(); ++k) {
    acc += spectrum(k);
    if (acc >= threshold * total) return static_cast<int>(k + 1);
  }
  return static_cast<int>(spectrum.size());
}

TwoStepFit fit_two_step(const JoinedData& data, int L0, int L1, const BasisConfig& cfg,
                        const Eigen::VectorXi& gamma_mask) {
  const int J = data.J;
  if (J < 2) throw Error(Errc::DimensionMismatch, "the two-step estimator needs at least two outcomes");
  const OrthonormalBasis basis(cfg);
  const int c = basis.c();
  if (L0 < 0 || L1 < 0 || L0 > c || L1 > c) throw Error(Errc::DimensionMismatch, "ranks must lie in 0..c");

  TwoStepFit out;
  ModelParams& p = out.params;
  p.basis = cfg;

  // (1) means
  p.alpha.resize(J, c);
  for (int j = 0; j < J; ++j) {
    std::vector<double> x, y;
    for (const SubjectView& s : data.subjects)
      for (int k : s.observed[j]) {
        x.push_back(s.times[k]);
        y.push_back(s.values(j, k));
      }
    p.alpha.row(j) = psmooth(x, y, basis).coef.transpose();
  }

  // (2)-(3) covariances and scalings
  const RawCovariances raw = raw_covariances(data, basis, p.alpha);
  std::vector<std::vector<Eigen::MatrixXd>> C(J, std::vector<Eigen::MatrixXd>(J));
  for (int j = 0; j < J; ++j)
    for (int jp = 0; jp < J; ++jp) C[j][jp] = raw.surfaces[j][jp].coef;
  const Identified id = solve_identifiability(C);
  p.beta = id.beta;
  p.sigma2 = raw.sigma2.cwiseMax(1e-8);
  out.sign_ambiguous = id.sign_ambiguous;

  // (4) truncated eigen systems
  out.spectrum0 = positive_spectrum(id.C0.coef);
  out.spectrum1 = positive_spectrum(id.C1.coef);
  truncated_eigen(id.C0.coef, L0, basis.ortho_integrals(), p.theta0, p.d0, out.rank_deficient);
  truncated_eigen(id.C1.coef, L1, basis.ortho_integrals(), p.theta1, p.d1, out.rank_deficient);

  // (5) predicted scores
  const std::vector<SubjectDesign> designs = build_designs(data.subjects, basis);
  p.cox.gamma_z = Eigen::VectorXd::Zero(data.P);
  p.cox.gamma_eta = Eigen::VectorXd::Zero(p.K());
  out.scores.resize(data.subjects.size());
  for (std::size_t i = 0; i < data.subjects.size(); ++i)
    out.scores[i] = conditional_moments(data.subjects[i], designs[i], p).mean;

  // (6) plug-in Cox regression
  const PosteriorMoments pm = PosteriorMoments::point_mass(out.scores, p.cox.gamma_eta);
  CoxFit cf = fit_cox(data.subjects, pm, p.cox, gamma_mask);
  p.cox = cf.coef;
  p.h0 = cf.h0;
  out.cox_iterations = cf.iterations;
  out.cox_score_norm = cf.score_norm;
  return out;
}

ModelParams init_from_two_step(const TwoStepFit& fit) {
  ModelParams p = fit.params;
  const OrthonormalBasis basis(p.basis);
  enforce_invariants(p, basis.ortho_integrals());
  return p;
}

}  // namespace fjm

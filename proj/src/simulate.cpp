#include "fjm/simulate.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fjm/error.hpp"
#include "fjm/rng.hpp"
#include "fjm/splines.hpp"

namespace fjm {

double Curve::operator()(double t) const {
  switch (kind) {
    case CurveKind::Sin:
      return a * std::sin(f * M_PI * t);
    case CurveKind::Cos:
      return a * std::cos(f * M_PI * t);
    case CurveKind::Poly: {
      double v = 0.0;
      for (auto it = coef.rbegin(); it != coef.rend(); ++it) v = v * t + *it;
      return v;
    }
    case CurveKind::Spline: {
      const Eigen::VectorXd b = spline->raw(t);
      return b.dot(Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size())));
    }
  }
  return 0.0;
}

Curve Curve::bspline(std::shared_ptr<const OrthonormalBasis> basis, const Eigen::VectorXd& raw_coef) {
  if (!basis || raw_coef.size() != basis->c())
    throw Error(Errc::DimensionMismatch, "spline curve needs one coefficient per basis function");
  return {CurveKind::Spline, 1.0, 1.0, std::vector<double>(raw_coef.data(), raw_coef.data() + raw_coef.size()),
          std::move(basis)};
}

Eigen::VectorXd SimSpec::gamma_eta() const {
  Eigen::VectorXd g(L0() + J() * L1());
  g.head(L0()) = gamma0;
  for (int j = 0; j < J(); ++j) g.segment(L0() + j * L1(), L1()) = gamma1[j];
  return g;
}

void validate(const SimSpec& s) {
  auto bad = [](const std::string& what) { throw Error(Errc::DimensionMismatch, "simulation spec: " + what); };
  if (s.n < 1) bad("n must be positive");
  if (s.J() < 1) bad("need at least one outcome");
  if (s.grid.empty()) bad("empty time grid");
  if (s.d0.size() != s.L0() || s.gamma0.size() != s.L0()) bad("shared component sizes differ");
  if (s.d1.size() != s.L1()) bad("d1 size differs from psi count");
  if (s.beta.size() != s.J() || s.sigma2.size() != s.J()) bad("beta/sigma2 sizes differ from J");
  if (static_cast<int>(s.gamma1.size()) != s.J()) bad("gamma1 needs one vector per outcome");
  for (const auto& g : s.gamma1)
    if (g.size() != s.L1()) bad("gamma1 vector size differs from L1");
  if (!(s.tau > 0.0) || !(s.h0 > 0.0) || !(s.c0 > 0.0)) bad("tau, h0 and c0 must be positive");
  for (double t : s.grid)
    if (t < 0.0 || t > s.tau) bad("grid point outside [0, tau]");
}

namespace {

struct LatentDraw {
  Eigen::VectorXd b;
  Eigen::VectorXd z;
  double eta = 0.0;
  double S = 0.0;
  double V = 0.0;
};

// Draw order per subject: scores (xi, zeta_1, ..., zeta_J), covariates,
// event uniform, censoring uniform.
LatentDraw draw_latent(const SimSpec& s, const Eigen::VectorXd& gamma_eta, Engine& eng) {
  NormalDist normal;
  Uniform01 unif;
  LatentDraw d;
  const int L0 = s.L0(), L1 = s.L1();
  d.b.resize(L0 + s.J() * L1);
  for (int l = 0; l < L0; ++l) d.b(l) = std::sqrt(s.d0(l)) * normal(eng);
  for (int j = 0; j < s.J(); ++j)
    for (int l = 0; l < L1; ++l) d.b(L0 + j * L1 + l) = std::sqrt(s.d1(l)) * normal(eng);
  d.z.resize(s.P());
  for (int k = 0; k < s.P(); ++k) d.z(k) = normal(eng);
  d.eta = d.b.dot(gamma_eta) + (s.P() ? d.z.dot(s.gamma_z) : 0.0);
  const double u = 1.0 - unif(eng);  // (0, 1]
  d.S = -std::log(u) / (s.h0 * std::exp(d.eta));
  d.V = unif(eng);
  return d;
}

bool is_event(double S, double C, double tau) { return S <= std::min(C, tau); }

}  // namespace

SimData generate(const SimSpec& spec) {
  validate(spec);
  const Eigen::VectorXd gamma_eta = spec.gamma_eta();
  const int J = spec.J(), L0 = spec.L0(), L1 = spec.L1();
  const int G = static_cast<int>(spec.grid.size());

  Eigen::MatrixXd mu(J, G), phi(L0, G), psi(L1, G);
  for (int k = 0; k < G; ++k) {
    for (int j = 0; j < J; ++j) mu(j, k) = spec.mu[j](spec.grid[k]);
    for (int l = 0; l < L0; ++l) phi(l, k) = spec.phi[l](spec.grid[k]);
    for (int l = 0; l < L1; ++l) psi(l, k) = spec.psi[l](spec.grid[k]);
  }

  SimData out;
  SimTruth& truth = out.truth;
  truth.c0 = spec.c0;
  std::vector<std::int64_t> ids;
  std::vector<int> outcomes;
  std::vector<double> times, values;
  std::vector<SurvivalRecord> surv;
  std::size_t censored = 0, visits = 0;

  for (int i = 0; i < spec.n; ++i) {
    Engine eng = StreamKey{spec.seed, 0, static_cast<std::uint64_t>(i), StreamTag::Simulation}.engine();
    const LatentDraw d = draw_latent(spec, gamma_eta, eng);
    const double C = std::isfinite(spec.c0) ? spec.c0 * d.V : std::numeric_limits<double>::infinity();
    const double T = std::min({d.S, C, spec.tau});
    const int delta = is_event(d.S, C, spec.tau) ? 1 : 0;
    censored += 1 - delta;
    truth.scores.push_back(d.b);
    truth.eta.push_back(d.eta);
    truth.event_time.push_back(d.S);
    truth.censor_time.push_back(C);

    NormalDist normal;
    for (int k = 0; k < G; ++k) {
      if (spec.grid[k] > T) continue;
      ++visits;
      const double shared = L0 ? d.b.head(L0).dot(phi.col(k)) : 0.0;
      for (int j = 0; j < J; ++j) {
        const double specific = L1 ? d.b.segment(L0 + j * L1, L1).dot(psi.col(k)) : 0.0;
        const double x = mu(j, k) + spec.beta(j) * (shared + specific);
        ids.push_back(i + 1);
        outcomes.push_back(j + 1);
        times.push_back(spec.grid[k]);
        values.push_back(x + std::sqrt(spec.sigma2(j)) * normal(eng));
      }
    }
    surv.push_back({i + 1, T, delta, d.z});
  }
  truth.censoring_rate = static_cast<double>(censored) / spec.n;
  truth.mean_observations = static_cast<double>(visits) / spec.n;

  const double tau = std::isfinite(spec.tau) ? spec.tau : std::numeric_limits<double>::max();
  out.longitudinal = LongitudinalDataset::from_rows(ids, outcomes, times, values, tau);
  out.survival = SurvivalDataset(std::move(surv));
  JoinOptions jo;
  jo.strict = true;
  out.joined = join_with_survival(out.longitudinal, out.survival, jo);
  return out;
}

double censoring_rate(const SimSpec& spec, double c0, int draws) {
  const Eigen::VectorXd gamma_eta = spec.gamma_eta();
  std::size_t censored = 0;
  for (int i = 0; i < draws; ++i) {
    Engine eng = StreamKey{spec.seed, 0, static_cast<std::uint64_t>(i), StreamTag::Calibration}.engine();
    const LatentDraw d = draw_latent(spec, gamma_eta, eng);
    if (!is_event(d.S, c0 * d.V, spec.tau)) ++censored;
  }
  return static_cast<double>(censored) / draws;
}

double calibrate_censoring(const SimSpec& spec, double target, double tol, int draws) {
  validate(spec);
  if (!(target > 0.0 && target < 1.0)) throw Error(Errc::Unachievable, "target censoring rate must lie in (0, 1)");
  const Eigen::VectorXd gamma_eta = spec.gamma_eta();
  std::vector<double> S(draws), V(draws);
  for (int i = 0; i < draws; ++i) {
    Engine eng = StreamKey{spec.seed, 0, static_cast<std::uint64_t>(i), StreamTag::Calibration}.engine();
    const LatentDraw d = draw_latent(spec, gamma_eta, eng);
    S[i] = d.S;
    V[i] = d.V;
  }
  auto rate = [&](double c0) {
    std::size_t censored = 0;
    for (int i = 0; i < draws; ++i)
      if (!is_event(S[i], c0 * V[i], spec.tau)) ++censored;
    return static_cast<double>(censored) / draws;
  };
  const double scale = std::isfinite(spec.tau) ? spec.tau : 1.0;
  double lo = std::log(1e-6 * scale), hi = std::log(1e6 * scale);
  const double r_lo = rate(std::exp(lo)), r_hi = rate(std::exp(hi));
  if (target < r_hi - tol)
    throw Error(Errc::Unachievable, "censoring cannot fall below " + std::to_string(r_hi) + " (truncation at tau)");
  if (target > r_lo + tol) throw Error(Errc::Unachievable, "censoring cannot exceed " + std::to_string(r_lo));
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (rate(std::exp(mid)) > target)
      lo = mid;  // too much censoring: move c0 up
    else
      hi = mid;
  }
  const double c0 = std::exp(0.5 * (lo + hi));
  if (std::abs(rate(c0) - target) > tol)
    throw Error(Errc::Unachievable, "no c0 reaches the target censoring rate within tolerance");
  return c0;
}

double orthonormality_error(const std::vector<Curve>& curves, double tau) {
  const Quadrature q = gauss_legendre(20, 0.0, 1.0);
  const int spans = 50;
  const int L = static_cast<int>(curves.size());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(L, L);
  for (int s = 0; s < spans; ++s) {
    const double a = tau * s / spans, h = tau / spans;
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
      const double t = a + h * q.nodes[k];
      for (int x = 0; x < L; ++x)
        for (int y = 0; y < L; ++y) M(x, y) += h * q.weights[k] * curves[x](t) * curves[y](t);
    }
  }
  return L ? (M - Eigen::MatrixXd::Identity(L, L)).cwiseAbs().maxCoeff() : 0.0;
}

SimSpec case2_spec(int n, std::uint64_t seed) {
  SimSpec s;
  s.name = "case2";
  s.n = n;
  s.seed = seed;
  for (int k = 0; k <= 10; ++k) s.grid.push_back(k / 10.0);
  const double r2 = std::sqrt(2.0);
  s.mu = {Curve::sin(5.0, 2.0), Curve::cos(5.0, 2.0)};
  s.phi = {Curve::sin(r2, 1.0), Curve::cos(r2, 3.0)};
  s.psi = {Curve::cos(r2, 1.0), Curve::cos(r2, 2.0)};
  s.d0 = Eigen::Vector2d(1.0, 0.5);
  s.d1 = Eigen::Vector2d(0.5, 0.25);
  s.beta = Eigen::Vector2d(1.0, -1.0);
  const double snr = 1.5;
  const double noise = (s.d0.sum() + s.d1.sum()) / (2.0 * snr);
  s.sigma2 = Eigen::Vector2d(noise, noise);
  s.gamma0 = Eigen::Vector2d(1.0, 0.5);
  s.gamma1 = {Eigen::Vector2d(0.2, 0.1), Eigen::Vector2d(0.2, 0.1)};
  s.gamma_z = Eigen::VectorXd::Zero(0);
  // h0 = 1 cannot get below 38% censoring once S > tau is censored.
  s.h0 = 1.8;
  s.c0 = calibrate_censoring(s, 0.30);
  return s;
}

std::string default_case1_bundle() { return std::string(FJM_DATA_DIR) + "/case1_bundle.json"; }

SimSpec case1_spec(int n, std::uint64_t seed, const std::string& bundle_path) {
  const std::string path = bundle_path.empty() ? default_case1_bundle() : bundle_path;
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingCoefficientBundle, "cannot open " + path);
  nlohmann::json js;
  try {
    in >> js;
  } catch (const std::exception& e) {
    throw Error(Errc::MissingCoefficientBundle, path + " is not valid JSON: " + e.what());
  }
  auto curves = [&](const char* key) {
    std::vector<Curve> out;
    if (!js.contains(key)) throw Error(Errc::MissingCoefficientBundle, std::string("bundle lacks '") + key + "'");
    for (const auto& c : js.at(key)) out.push_back(Curve::poly(c.at("coef").get<std::vector<double>>()));
    return out;
  };

  SimSpec s;
  s.name = "case1";
  s.n = n;
  s.seed = seed;
  s.grid = js.at("grid").get<std::vector<double>>();
  s.mu = curves("mu");
  s.phi = curves("phi");
  s.psi = curves("psi");
  s.d0 = Eigen::Vector2d(95.41, 5.04);
  s.d1 = Eigen::Vector2d(21.90, 2.05);
  s.beta = Eigen::Vector2d(1.0, -1.44);
  s.sigma2 = Eigen::Vector2d(9.49, 21.98);
  s.gamma0 = Eigen::Vector2d(0.33, 0.31);
  s.gamma1 = {Eigen::Vector2d(0.01, -0.27), Eigen::Vector2d(0.25, 0.80)};
  s.gamma_z = Eigen::VectorXd::Zero(0);
  if (s.J() != 2 || s.L0() != 2 || s.L1() != 2)
    throw Error(Errc::MissingCoefficientBundle, "bundle must hold 2 means, 2 shared and 2 specific functions");
  // With Var(eta) near 13.7, h0 = 1 puts the median follow-up below one
  // visit interval; 0.255 keeps 65% censoring with about 5.5 visits.
  s.h0 = 0.255;
  s.c0 = calibrate_censoring(s, 0.65);
  return s;
}

SimSpec spec_from_params(const ModelParams& p, const std::vector<double>& grid, int n, std::uint64_t seed,
                         double h0) {
  auto basis = std::make_shared<const OrthonormalBasis>(p.basis);
  const Eigen::MatrixXd& Ginv = basis->gram_inv_sqrt();
  SimSpec s;
  s.name = "from-params";
  s.n = n;
  s.seed = seed;
  s.grid = grid;
  s.tau = p.basis.tau;
  for (int j = 0; j < p.J(); ++j) s.mu.push_back(Curve::bspline(basis, p.alpha.row(j).transpose()));
  for (int l = 0; l < p.L0(); ++l) s.phi.push_back(Curve::bspline(basis, Ginv * p.theta0.col(l)));
  for (int l = 0; l < p.L1(); ++l) s.psi.push_back(Curve::bspline(basis, Ginv * p.theta1.col(l)));
  s.d0 = p.d0;
  s.d1 = p.d1;
  s.beta = p.beta;
  s.sigma2 = p.sigma2;
  s.gamma0 = p.cox.gamma_eta.head(p.L0());
  for (int j = 0; j < p.J(); ++j) s.gamma1.push_back(p.cox.gamma_eta.segment(p.L0() + j * p.L1(), p.L1()));
  s.gamma_z = p.cox.gamma_z;
  if (h0 > 0.0) {
    s.h0 = h0;
  } else {
    if (p.h0.size() == 0) throw Error(Errc::DimensionMismatch, "no baseline hazard to derive a constant from");
    s.h0 = p.h0.cum.back() / p.h0.times.back();
  }
  validate(s);
  return s;
}

ModelParams params_from_spec(const SimSpec& spec, const BasisConfig& cfg) {
  validate(spec);
  const OrthonormalBasis basis(cfg);
  const Quadrature quad = basis.quadrature(20);
  const int c = cfg.c;
  Eigen::MatrixXd Bt(quad.nodes.size(), c), B(quad.nodes.size(), c);
  for (std::size_t k = 0; k < quad.nodes.size(); ++k) {
    Bt.row(k) = basis.ortho(quad.nodes[k]).transpose();
    B.row(k) = basis.raw(quad.nodes[k]).transpose();
  }
  const Eigen::Map<const Eigen::VectorXd> w(quad.weights.data(), static_cast<Eigen::Index>(quad.weights.size()));
  auto project = [&](const std::vector<Curve>& fs) {
    Eigen::MatrixXd theta(c, fs.size());
    for (std::size_t l = 0; l < fs.size(); ++l) {
      Eigen::VectorXd f(quad.nodes.size());
      for (std::size_t k = 0; k < quad.nodes.size(); ++k) f(k) = fs[l](quad.nodes[k]);
      theta.col(l) = Bt.transpose() * w.cwiseProduct(f);
    }
    if (theta.cols() == 0) return theta;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(theta.transpose() * theta);
    return Eigen::MatrixXd(theta * es.operatorInverseSqrt());
  };

  ModelParams p;
  p.basis = cfg;
  p.alpha.resize(spec.J(), c);
  const Eigen::MatrixXd G = B.transpose() * w.asDiagonal() * B;
  const Eigen::LDLT<Eigen::MatrixXd> Gf(G);
  for (int j = 0; j < spec.J(); ++j) {
    Eigen::VectorXd f(quad.nodes.size());
    for (std::size_t k = 0; k < quad.nodes.size(); ++k) f(k) = spec.mu[j](quad.nodes[k]);
    p.alpha.row(j) = Gf.solve(B.transpose() * w.cwiseProduct(f)).transpose();
  }
  p.beta = spec.beta;
  p.theta0 = project(spec.phi);
  p.theta1 = project(spec.psi);
  p.d0 = spec.d0;
  p.d1 = spec.d1;
  p.sigma2 = spec.sigma2;
  p.cox.gamma_z = spec.gamma_z;
  p.cox.gamma_eta = spec.gamma_eta();
  return p;
}

}  // namespace fjm

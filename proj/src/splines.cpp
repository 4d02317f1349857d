#include "fjm/splines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "fjm/error.hpp"

namespace fjm {

namespace {

// P_n(x) and P_n'(x) by the three-term recurrence.
std::pair<double, double> legendre(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return {1.0, 0.0};
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

}  // namespace

Quadrature gauss_legendre(int n, double a, double b) {
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = legendre(n, x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.nodes[i] = mid - half * x;
    q.nodes[n - 1 - i] = mid + half * x;
    q.weights[i] = q.weights[n - 1 - i] = half * w;
  }
  return q;
}

OrthonormalBasis::OrthonormalBasis(const BasisConfig& cfg) : cfg_(cfg) {
  if (cfg.order < 1 || cfg.order > 15 || cfg.c < cfg.order) throw Error(Errc::Usage, "basis dimension must be at least the order");
  if (!(cfg.tau > 0.0)) throw Error(Errc::SingularGram, "degenerate domain");

  const int k = cfg.order;
  const int inner = cfg.c - k;
  knots_.reserve(cfg.c + k);
  for (int i = 0; i < k; ++i) knots_.push_back(0.0);
  for (int i = 1; i <= inner; ++i) knots_.push_back(cfg.tau * i / (inner + 1));
  for (int i = 0; i < k; ++i) knots_.push_back(cfg.tau);

  const Quadrature q = quadrature(k);
  const int c = cfg.c;
  G_ = Eigen::MatrixXd::Zero(c, c);
  raw_int_ = Eigen::VectorXd::Zero(c);
  for (std::size_t a = 0; a < q.nodes.size(); ++a) {
    const Eigen::VectorXd b = raw(q.nodes[a]);
    G_.noalias() += q.weights[a] * b * b.transpose();
    raw_int_ += q.weights[a] * b;
  }
  G_ = 0.5 * (G_ + G_.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G_);
  const Eigen::VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() < 1e-12) throw Error(Errc::SingularGram, "Gram matrix eigenvalue below 1e-12");
  const Eigen::MatrixXd& V = es.eigenvectors();
  G_inv_sqrt_ = V * ev.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
  G_sqrt_ = V * ev.cwiseSqrt().asDiagonal() * V.transpose();
  ortho_int_ = G_inv_sqrt_ * raw_int_;
}

std::vector<double> OrthonormalBasis::breakpoints() const {
  std::vector<double> u(knots_.begin() + cfg_.order - 1, knots_.end() - cfg_.order + 1);
  return u;
}

Quadrature OrthonormalBasis::quadrature(int nodes_per_span) const {
  const auto u = breakpoints();
  Quadrature out;
  for (std::size_t s = 0; s + 1 < u.size(); ++s) {
    const Quadrature q = gauss_legendre(nodes_per_span, u[s], u[s + 1]);
    out.nodes.insert(out.nodes.end(), q.nodes.begin(), q.nodes.end());
    out.weights.insert(out.weights.end(), q.weights.begin(), q.weights.end());
  }
  return out;
}

// Cox-de Boor recursion for the `order` non-zero functions on the span
// containing t, written into out[0..c).
void OrthonormalBasis::basis_into(double t, double* out) const {
  const int k = cfg_.order;
  const int c = cfg_.c;
  std::fill(out, out + c, 0.0);

  // span index s with knots[s] <= t < knots[s+1], clamped to the last span
  int s = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin()) - 1;
  s = std::clamp(s, k - 1, c - 1);

  double N[16];
  double left[16], right[16];
  N[0] = 1.0;
  for (int d = 1; d < k; ++d) {
    left[d] = t - knots_[s + 1 - d];
    right[d] = knots_[s + d] - t;
    double saved = 0.0;
    for (int r = 0; r < d; ++r) {
      const double denom = right[r + 1] + left[d - r];
      const double tmp = denom == 0.0 ? 0.0 : N[r] / denom;
      N[r] = saved + right[r + 1] * tmp;
      saved = left[d - r] * tmp;
    }
    N[d] = saved;
  }
  for (int r = 0; r < k; ++r) out[s - k + 1 + r] = N[r];
}

Eigen::VectorXd OrthonormalBasis::raw(double t) const {
  Eigen::VectorXd b(cfg_.c);
  basis_into(t, b.data());
  return b;
}

Eigen::MatrixXd OrthonormalBasis::eval_matrix(const std::vector<double>& times, bool orthonormal) const {
  const double slack = 1e-12 * cfg_.tau;
  Eigen::MatrixXd B(static_cast<Eigen::Index>(times.size()), cfg_.c);
  Eigen::VectorXd row(cfg_.c);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    if (!(t >= -slack && t <= cfg_.tau + slack))
      throw Error(Errc::TimeOutOfDomain, "evaluation time outside the basis domain");
    basis_into(std::clamp(t, 0.0, cfg_.tau), row.data());
    B.row(static_cast<Eigen::Index>(k)) = row.transpose();
  }
  if (orthonormal) return B * G_inv_sqrt_;  // G^{-1/2} is symmetric
  return B;
}

OrthonormalBasis build_basis(const BasisConfig& cfg) { return OrthonormalBasis(cfg); }

int default_c(std::size_t total_obs) {
  return static_cast<int>(std::lround(std::pow(static_cast<double>(std::max<std::size_t>(total_obs, 1)), 0.2) + 4.0));
}

Eigen::MatrixXd difference_penalty(int c, int order) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(c, c);
  for (int d = 0; d < order && D.rows() > 1; ++d) {
    Eigen::MatrixXd next(D.rows() - 1, c);
    for (Eigen::Index r = 0; r + 1 < D.rows(); ++r) next.row(r) = D.row(r + 1) - D.row(r);
    D = next;
  }
  return D.transpose() * D;
}

std::vector<double> gcv_lambda_grid() {
  std::vector<double> g;
  for (int k = -32; k <= 24; ++k) g.push_back(std::pow(10.0, k / 4.0));
  return g;
}

SmoothFit psmooth(const std::vector<double>& x_in, const std::vector<double>& y_in, const OrthonormalBasis& basis,
                  int penalty_order) {
  if (x_in.size() != y_in.size()) throw Error(Errc::DimensionMismatch, "x and y lengths differ");
  const std::size_t n = x_in.size();
  if (n < 4) throw Error(Errc::InsufficientData, "fewer than 4 points for a penalized spline fit");

  // canonical order so the fit does not depend on input order
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x_in[a] != x_in[b] ? x_in[a] < x_in[b] : y_in[a] < y_in[b];
  });
  std::vector<double> x(n);
  Eigen::VectorXd y(n);
  for (std::size_t k = 0; k < n; ++k) {
    x[k] = x_in[idx[k]];
    y(k) = y_in[idx[k]];
  }

  const Eigen::MatrixXd B = basis.eval_matrix(x, false);
  const Eigen::MatrixXd BtB = B.transpose() * B;
  const Eigen::VectorXd Bty = B.transpose() * y;
  const Eigen::MatrixXd P = difference_penalty(basis.c(), penalty_order);
  const double scale = BtB.trace() / std::max(P.trace(), 1e-300);

  SmoothFit best;
  best.gcv = std::numeric_limits<double>::infinity();
  for (double mult : gcv_lambda_grid()) {
    const double lambda = mult * scale;
    Eigen::MatrixXd A = BtB + lambda * P;
    bool ridge = false;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
      A.diagonal().array() += 1e-10 * scale;
      llt.compute(A);
      ridge = true;
      if (llt.info() != Eigen::Success) continue;
    }
    const Eigen::VectorXd coef = llt.solve(Bty);
    const double edf = llt.solve(BtB).trace();
    const double rss = (y - B * coef).squaredNorm();
    const double denom = static_cast<double>(n) - edf;
    if (denom <= 1e-8) continue;
    const double gcv = static_cast<double>(n) * rss / (denom * denom);
    if (gcv < best.gcv) {
      best.coef = coef;
      best.lambda = lambda;
      best.gcv = gcv;
      best.edf = edf;
      best.ridge_used = ridge;
    }
  }
  if (best.coef.size() == 0) throw Error(Errc::SingularDesign, "no smoothing parameter produced a valid fit");
  return best;
}

SmoothFit psmooth(const std::vector<double>& x, const std::vector<double>& y, const BasisConfig& cfg,
                  int penalty_order) {
  return psmooth(x, y, build_basis(cfg), penalty_order);
}

}  // namespace fjm

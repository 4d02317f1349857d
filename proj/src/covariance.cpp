#include "fjm/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fjm/error.hpp"

namespace fjm {

double CovSurface::eval(const OrthonormalBasis& basis, double s, double t) const {
  return basis.ortho(s).dot(coef * basis.ortho(t));
}

Eigen::MatrixXd CovSurface::on_grid(const OrthonormalBasis& basis, const std::vector<double>& grid) const {
  const Eigen::MatrixXd E = basis.eval_matrix(grid, true);
  return E * coef * E.transpose();
}

namespace {

Eigen::MatrixXd kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

// Sufficient statistics of a tensor-product regression r(s,t) ~ b(s)^T A b(t)
// with vec index a + c*b.
struct TensorStats {
  Eigen::MatrixXd XtX;
  Eigen::VectorXd Xty;
  double yty = 0.0;
  std::size_t count = 0;

  explicit TensorStats(int c) : XtX(Eigen::MatrixXd::Zero(c * c, c * c)), Xty(Eigen::VectorXd::Zero(c * c)) {}
};

struct SparseRow {
  int first = 0;
  int len = 0;
  double v[16];
};

SparseRow sparse_row(const Eigen::MatrixXd& B, Eigen::Index k) {
  SparseRow r;
  const Eigen::Index c = B.cols();
  Eigen::Index a = 0;
  while (a < c && B(k, a) == 0.0) ++a;
  Eigen::Index b = c;
  while (b > a && B(k, b - 1) == 0.0) --b;
  r.first = static_cast<int>(a);
  r.len = static_cast<int>(b - a);
  for (int i = 0; i < r.len; ++i) r.v[i] = B(k, a + i);
  return r;
}

void accumulate(TensorStats& st, const SparseRow& s, const SparseRow& t, double y, int c) {
  int idx[256];
  double val[256];
  int nz = 0;
  for (int b = 0; b < t.len; ++b)
    for (int a = 0; a < s.len; ++a) {
      idx[nz] = (s.first + a) + c * (t.first + b);
      val[nz] = s.v[a] * t.v[b];
      ++nz;
    }
  for (int p = 0; p < nz; ++p) {
    st.Xty(idx[p]) += val[p] * y;
    for (int q = 0; q < nz; ++q) st.XtX(idx[p], idx[q]) += val[p] * val[q];
  }
  st.yty += y * y;
  ++st.count;
}

// GCV-selected penalised solve; returns the raw coefficient matrix.
Eigen::MatrixXd smooth_tensor(const TensorStats& st, const Eigen::MatrixXd& pen, int c, double& lambda_out) {
  const double scale = st.XtX.trace() / std::max(pen.trace(), 1e-300);
  const double n = static_cast<double>(st.count);
  double best_gcv = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best;
  for (double mult : gcv_lambda_grid()) {
    const double lambda = mult * scale;
    Eigen::MatrixXd A = st.XtX + lambda * pen;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
      A.diagonal().array() += 1e-10 * std::max(scale, 1e-300);
      llt.compute(A);
      if (llt.info() != Eigen::Success) continue;
    }
    const Eigen::VectorXd a = llt.solve(st.Xty);
    const double edf = llt.solve(st.XtX).trace();
    const double rss = std::max(st.yty - 2.0 * a.dot(st.Xty) + a.dot(st.XtX * a), 0.0);
    const double denom = n - edf;
    if (denom <= 1e-8) continue;
    const double gcv = n * rss / (denom * denom);
    if (gcv < best_gcv) {
      best_gcv = gcv;
      best = a;
      lambda_out = lambda;
    }
  }
  if (best.size() == 0) throw Error(Errc::SingularDesign, "covariance smoothing failed for every smoothing parameter");
  return Eigen::Map<const Eigen::MatrixXd>(best.data(), c, c);
}

}  // namespace

RawCovariances raw_covariances(const JoinedData& data, const OrthonormalBasis& basis, const Eigen::MatrixXd& alpha) {
  const int J = data.J;
  const int c = basis.c();
  if (alpha.rows() != J || alpha.cols() != c) throw Error(Errc::DimensionMismatch, "mean coefficients do not match J x c");

  const int npairs = J * (J + 1) / 2;
  std::vector<TensorStats> stats(npairs, TensorStats(c));
  auto pair_index = [J](int j, int jp) { return j * J - j * (j - 1) / 2 + (jp - j); };  // j <= jp

  std::vector<std::vector<double>> diag_t(J), diag_r2(J);

  for (const auto& s : data.subjects) {
    if (s.m() == 0) continue;
    const Eigen::MatrixXd B = basis.eval_matrix(s.times, false);
    std::vector<SparseRow> rows(s.m());
    for (int k = 0; k < s.m(); ++k) rows[k] = sparse_row(B, k);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(J, s.m());
    for (int j = 0; j < J; ++j)
      for (int k : s.observed[j]) {
        r(j, k) = s.values(j, k) - B.row(k).dot(alpha.row(j));
        diag_t[j].push_back(s.times[k]);
        diag_r2[j].push_back(r(j, k) * r(j, k));
      }
    for (int j = 0; j < J; ++j)
      for (int jp = j; jp < J; ++jp) {
        TensorStats& st = stats[pair_index(j, jp)];
        for (int k : s.observed[j])
          for (int l : s.observed[jp]) {
            if (j == jp && k == l) continue;
            accumulate(st, rows[k], rows[l], r(j, k) * r(jp, l), c);
          }
      }
  }

  const Eigen::MatrixXd P = difference_penalty(c, 2);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(c, c);
  const Eigen::MatrixXd pen = kron(I, P) + kron(P, I);
  const Eigen::MatrixXd& Gh = basis.gram_sqrt();

  RawCovariances out;
  out.surfaces.assign(J, std::vector<CovSurface>(J));
  out.lambda.assign(npairs, 0.0);
  for (int j = 0; j < J; ++j)
    for (int jp = j; jp < J; ++jp) {
      const int p = pair_index(j, jp);
      if (stats[p].count == 0)
        throw Error(Errc::InsufficientPairs, "no subject contributes a pair for outcomes (" + std::to_string(j + 1) +
                                                 ", " + std::to_string(jp + 1) + ")");
      Eigen::MatrixXd A = smooth_tensor(stats[p], pen, c, out.lambda[p]);
      A = 0.5 * (A + A.transpose());
      CovSurface cs;
      cs.coef = Gh * A * Gh;
      cs.coef = 0.5 * (cs.coef + cs.coef.transpose());
      cs.kind = j == jp ? SurfaceKind::Auto : SurfaceKind::Cross;
      cs.j = j;
      cs.jp = jp;
      out.surfaces[j][jp] = cs;
      CovSurface tr = cs;
      tr.coef = cs.coef.transpose();
      tr.j = jp;
      tr.jp = j;
      out.surfaces[jp][j] = tr;
    }

  // error variances from the gap between the smoothed raw diagonal and the
  // smoothed surface on a dense grid
  std::vector<double> grid(101);
  for (int g = 0; g <= 100; ++g) grid[g] = basis.tau() * g / 100.0;
  const Eigen::MatrixXd Bg = basis.eval_matrix(grid, false);
  const Eigen::MatrixXd Eg = basis.eval_matrix(grid, true);
  out.sigma2.resize(J);
  for (int j = 0; j < J; ++j) {
    const SmoothFit v = psmooth(diag_t[j], diag_r2[j], basis, 2);
    const Eigen::VectorXd vg = Bg * v.coef;
    const Eigen::VectorXd cg = (Eg * out.surfaces[j][j].coef).cwiseProduct(Eg).rowwise().sum();
    out.sigma2(j) = std::max((vg - cg).mean(), 1e-8);
  }
  return out;
}

Identified solve_identifiability(const std::vector<std::vector<Eigen::MatrixXd>>& C) {
  const int J = static_cast<int>(C.size());
  if (J < 2) throw Error(Errc::DegenerateScaling, "identifiability needs at least two outcomes");
  auto inner = [](const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) { return A.cwiseProduct(B).sum(); };

  double scale2 = 0.0;  // largest squared auto-covariance norm
  for (int j = 0; j < J; ++j) scale2 = std::max(scale2, C[j][j].squaredNorm());
  if (!(scale2 > 0.0)) throw Error(Errc::DegenerateScaling, "all auto-covariances vanish");

  Identified out;
  out.beta = Eigen::VectorXd::Ones(J);
  if (J == 2) {
    const double n11 = C[0][0].squaredNorm();
    const double n22 = C[1][1].squaredNorm();
    const double n12 = C[0][1].squaredNorm();
    if (!(n11 > 1e-10 * scale2) || !(n12 > 1e-10 * std::sqrt(n11 * n22)))
      throw Error(Errc::DegenerateScaling, "cross-covariance carries no information on beta_2");
    const double b2sq = inner(C[1][1], C[0][0]) / n11;
    if (!(b2sq > 0.0)) throw Error(Errc::DegenerateScaling, "non-positive beta_2^2 estimate");
    const double tr12 = C[0][1].trace();
    out.sign_ambiguous = std::abs(tr12) < 1e-8 * std::sqrt(std::abs(C[0][0].trace() * C[1][1].trace()));
    out.beta(1) = (tr12 < 0.0 ? -1.0 : 1.0) * std::sqrt(b2sq);
  } else {
    for (int j = 1; j < J; ++j) {
      double sum = 0.0;
      int used = 0;
      for (int jp = 1; jp < J; ++jp) {
        if (jp == j) continue;
        const double den = C[jp][0].squaredNorm();
        if (!(den > 1e-10 * scale2)) continue;
        sum += inner(C[j][jp], C[jp][0]) / den;
        ++used;
      }
      if (used == 0) throw Error(Errc::DegenerateScaling, "no informative cross-covariance for outcome " + std::to_string(j + 1));
      out.beta(j) = sum / used;
    }
  }

  const Eigen::Index c = C[0][0].rows();
  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(c, c);
  double den = 0.0;
  for (int j = 0; j < J; ++j)
    for (int jp = j + 1; jp < J; ++jp) {
      const double bb = out.beta(j) * out.beta(jp);
      num += bb * 0.5 * (C[j][jp] + C[jp][j]);
      den += bb * bb;
    }
  if (!(den > 0.0)) throw Error(Errc::DegenerateScaling, "zero scaling products");
  out.C0.coef = num / den;
  out.C0.kind = SurfaceKind::Shared;

  Eigen::MatrixXd num1 = Eigen::MatrixXd::Zero(c, c);
  double den1 = 0.0;
  for (int j = 0; j < J; ++j) {
    const double b2 = out.beta(j) * out.beta(j);
    num1 += b2 * (C[j][j] - b2 * out.C0.coef);
    den1 += b2 * b2;
  }
  out.C1.coef = num1 / den1;
  out.C1.kind = SurfaceKind::Specific;
  out.C0.coef = 0.5 * (out.C0.coef + out.C0.coef.transpose());
  out.C1.coef = 0.5 * (out.C1.coef + out.C1.coef.transpose());
  return out;
}

void apply_sign_rule(Eigen::MatrixXd& theta, const Eigen::VectorXd& ortho_integrals) {
  for (Eigen::Index k = 0; k < theta.cols(); ++k) {
    auto col = theta.col(k);
    const double integral = ortho_integrals.dot(col);
    const double tol = 1e-10 * ortho_integrals.norm() * col.norm();
    bool flip = false;
    if (std::abs(integral) > tol) {
      flip = integral < 0.0;
    } else {
      const double big = 1e-8 * col.cwiseAbs().maxCoeff();
      for (Eigen::Index a = 0; a < col.size(); ++a)
        if (std::abs(col(a)) > big) {
          flip = col(a) < 0.0;
          break;
        }
    }
    if (flip) col = -col;
  }
}

EigenSystem eigendecompose(const Eigen::MatrixXd& coef, int L, const Eigen::VectorXd& ortho_integrals) {
  const Eigen::MatrixXd S = 0.5 * (coef + coef.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const Eigen::Index c = S.rows();
  const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  int positive = 0;
  for (Eigen::Index k = 0; k < c; ++k)
    if (es.eigenvalues()(k) > 1e-12 * top) ++positive;

  EigenSystem out;
  const int keep = std::min(L, positive);
  out.rank_deficient = positive < L;
  out.values.resize(keep);
  out.theta.resize(c, keep);
  for (int k = 0; k < keep; ++k) {
    out.values(k) = es.eigenvalues()(c - 1 - k);
    out.theta.col(k) = es.eigenvectors().col(c - 1 - k);
  }
  apply_sign_rule(out.theta, ortho_integrals);
  return out;
}

}  // namespace fjm

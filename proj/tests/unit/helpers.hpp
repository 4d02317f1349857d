#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "fjm/data.hpp"
#include "fjm/params.hpp"
#include "fjm/splines.hpp"

namespace fjm::testing {

inline Eigen::MatrixXd random_orthonormal(int c, int L, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd A(c, L);
  for (int i = 0; i < c; ++i)
    for (int k = 0; k < L; ++k) A(i, k) = g(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  return qr.householderQ() * Eigen::MatrixXd::Identity(c, L);
}

/// Valid parameters with random smooth structure; h0 is a unit-rate step
/// hazard with jumps at the given event times.
inline ModelParams random_params(int J, int L0, int L1, int P, std::mt19937_64& rng, int c = 9) {
  std::uniform_real_distribution<double> u(0.2, 1.5);
  std::normal_distribution<double> g;
  ModelParams p;
  p.basis = BasisConfig{c, 4, 1.0};
  p.alpha = Eigen::MatrixXd(J, c);
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < c; ++k) p.alpha(j, k) = g(rng);
  p.beta = Eigen::VectorXd(J);
  p.beta(0) = 1.0;
  for (int j = 1; j < J; ++j) p.beta(j) = (j % 2 ? -1.0 : 1.0) * u(rng);
  Eigen::MatrixXd T = random_orthonormal(c, L0 + L1, rng);
  p.theta0 = T.leftCols(L0);
  p.theta1 = T.rightCols(L1);
  p.d0 = Eigen::VectorXd(L0);
  p.d1 = Eigen::VectorXd(L1);
  for (int k = 0; k < L0; ++k) p.d0(k) = 2.0 * u(rng) / (k + 1);
  for (int k = 0; k < L1; ++k) p.d1(k) = u(rng) / (k + 1);
  std::sort(p.d0.data(), p.d0.data() + L0, std::greater<>());
  std::sort(p.d1.data(), p.d1.data() + L1, std::greater<>());
  p.sigma2 = Eigen::VectorXd(J);
  for (int j = 0; j < J; ++j) p.sigma2(j) = 0.3 * u(rng);
  p.cox.gamma_z = Eigen::VectorXd::Zero(P);
  p.cox.gamma_eta = Eigen::VectorXd::Zero(L0 + J * L1);
  return p;
}

/// Subject observed on a shared grid for every outcome.
inline SubjectView make_subject(const std::vector<double>& times, const Eigen::MatrixXd& values, double T, int delta,
                                const Eigen::VectorXd& z = Eigen::VectorXd(), std::int64_t id = 1) {
  SubjectView s;
  s.id = id;
  s.times = times;
  s.values = values;
  const int J = static_cast<int>(values.rows()), m = static_cast<int>(times.size());
  s.present = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(J, m, true);
  s.observed.assign(J, {});
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < m; ++k) {
      if (std::isnan(values(j, k))) {
        s.present(j, k) = false;
        continue;
      }
      s.observed[j].push_back(k);
    }
  s.T = T;
  s.delta = delta;
  s.z = z;
  return s;
}

/// Mean curves of `p` at the subject's grid.
inline Eigen::MatrixXd mean_values(const ModelParams& p, const std::vector<double>& times) {
  const OrthonormalBasis b(p.basis);
  return p.alpha * b.eval_matrix(times, false).transpose();
}

/// Step hazard with unit jumps at the given times.
inline BaselineHazard step_hazard(std::vector<double> times, double jump = 1.0) {
  std::sort(times.begin(), times.end());
  BaselineHazard h;
  double cum = 0.0;
  for (double t : times) {
    h.times.push_back(t);
    h.jumps.push_back(jump);
    cum += jump;
    h.cum.push_back(cum);
  }
  return h;
}

}  // namespace fjm::testing

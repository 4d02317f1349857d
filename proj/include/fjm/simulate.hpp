#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fjm/data.hpp"
#include "fjm/params.hpp"
#include "fjm/splines.hpp"

namespace fjm {

enum class CurveKind { Sin, Cos, Poly, Spline };

/// a sin(f pi t), a cos(f pi t), sum_k coef[k] t^k, or b(t)' coef in the raw
/// B-spline basis of `spline`.
struct Curve {
  CurveKind kind = CurveKind::Poly;
  double a = 1.0;
  double f = 1.0;
  std::vector<double> coef;
  std::shared_ptr<const OrthonormalBasis> spline;

  double operator()(double t) const;
  static Curve sin(double a, double f) { return {CurveKind::Sin, a, f, {}, nullptr}; }
  static Curve cos(double a, double f) { return {CurveKind::Cos, a, f, {}, nullptr}; }
  static Curve poly(std::vector<double> c) { return {CurveKind::Poly, 1.0, 1.0, std::move(c), nullptr}; }
  static Curve bspline(std::shared_ptr<const OrthonormalBasis> basis, const Eigen::VectorXd& raw_coef);
};

struct SimSpec {
  std::string name = "custom";
  int n = 100;
  std::vector<double> grid;  // shared observation times
  std::vector<Curve> mu;     // J
  std::vector<Curve> phi;    // L0
  std::vector<Curve> psi;    // L1
  Eigen::VectorXd d0, d1;
  Eigen::VectorXd beta;
  Eigen::VectorXd sigma2;
  Eigen::VectorXd gamma0;               // L0
  std::vector<Eigen::VectorXd> gamma1;  // J vectors of length L1
  Eigen::VectorXd gamma_z;              // P; covariates drawn N(0, 1)
  double h0 = 1.0;
  double c0 = std::numeric_limits<double>::infinity();  // Uniform(0, c0) censoring
  double tau = 1.0;
  std::uint64_t seed = 1;

  int J() const { return static_cast<int>(mu.size()); }
  int L0() const { return static_cast<int>(phi.size()); }
  int L1() const { return static_cast<int>(psi.size()); }
  int P() const { return static_cast<int>(gamma_z.size()); }
  /// (gamma0, gamma11, ..., gamma1J) stacked.
  Eigen::VectorXd gamma_eta() const;
};

/// Throws DimensionMismatch on inconsistent sizes.
void validate(const SimSpec& spec);

struct SimTruth {
  std::vector<Eigen::VectorXd> scores;  // b_i
  std::vector<double> eta;
  std::vector<double> event_time;   // S_i
  std::vector<double> censor_time;  // C_i
  double c0 = 0.0;
  double censoring_rate = 0.0;
  double mean_observations = 0.0;  // per subject, counted on the shared grid
};

struct SimData {
  JoinedData joined;
  LongitudinalDataset longitudinal;
  SurvivalDataset survival;
  SimTruth truth;
};

/// Latent scores, exponential event times by inversion, uniform censoring
/// and truncation at tau; only grid points t <= T_i are kept.
SimData generate(const SimSpec& spec);

/// c0 such that the censoring rate is within `tol` of `target`, by bisection
/// over common random numbers. Throws Unachievable.
double calibrate_censoring(const SimSpec& spec, double target, double tol = 0.02, int draws = 50000);

/// Censoring rate of `spec` with the given c0, over the calibration draws.
double censoring_rate(const SimSpec& spec, double c0, int draws = 50000);

/// Orthonormality defect max |int f_a f_b - 1{a = b}| on [0, tau].
double orthonormality_error(const std::vector<Curve>& curves, double tau);

SimSpec case2_spec(int n = 800, std::uint64_t seed = 1);

/// Case-1 scalars with the smooth functions from the coefficient bundle.
/// Throws MissingCoefficientBundle.
SimSpec case1_spec(int n = 803, std::uint64_t seed = 1, const std::string& bundle_path = "");

std::string default_case1_bundle();

/// Simulation spec whose curves, variances and Cox coefficients are those of
/// a fitted model. The baseline hazard is the constant h0; when h0 <= 0 it is
/// the Breslow cumulative hazard at its last jump divided by that time.
SimSpec spec_from_params(const ModelParams& p, const std::vector<double>& grid, int n, std::uint64_t seed,
                         double h0 = 0.0);

/// L2 projection of the spec's curves onto the spline basis; eigenfunction
/// columns are re-orthonormalised. The baseline hazard is left empty.
ModelParams params_from_spec(const SimSpec& spec, const BasisConfig& basis);

}  // namespace fjm

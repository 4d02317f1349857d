#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fjm/data.hpp"
#include "fjm/mcem.hpp"
#include "fjm/params.hpp"
#include "fjm/selection.hpp"
#include "fjm/simulate.hpp"

namespace fjm {

using Json = nlohmann::json;

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

Json to_json(const Eigen::VectorXd& v);
Json to_json(const Eigen::MatrixXd& m);  // row-major nested arrays
Eigen::VectorXd vector_from_json(const Json& j);
Eigen::MatrixXd matrix_from_json(const Json& j);

Json params_to_json(const ModelParams& p);
/// Inverse of params_to_json. Throws Usage on malformed input.
ModelParams params_from_json(const Json& j);

/// Report without wall-clock fields (those go under "timing").
Json report_to_json(const FitReport& r);
Json timing_to_json(const FitReport& r);

Json spec_to_json(const SimSpec& s);
SimSpec spec_from_json(const Json& j);
Json truth_to_json(const SimSpec& spec, const SimTruth& t);

/// "# config-hash: <hash>" comment line.
void write_hash_line(std::ostream& out, const std::string& hash);

/// term, estimate, se, p_value; terms z1.., xi1.., zeta<j>_<l>.
void write_coefficients_csv(std::ostream& out, const ModelParams& p, const std::string& hash);
void write_baseline_csv(std::ostream& out, const BaselineHazard& h0, const std::string& hash);
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace, const std::string& hash);
/// subject, outcome, time, value with X_ij(t) = mu_j(t) + beta_j (phi(t)' xi + psi(t)' zeta_j)
/// at the given score vectors on an equally spaced grid over [0, tau].
void write_fitted_curves_csv(std::ostream& out, const JoinedData& data, const ModelParams& p,
                             const std::vector<Eigen::VectorXd>& scores, int grid_size, const std::string& hash);
void write_scores_csv(std::ostream& out, const JoinedData& data, const ModelParams& p,
                      const std::vector<Eigen::VectorXd>& scores, const std::string& hash);
void write_grid_csv(std::ostream& out, const SelectionGrid& grid, const std::string& hash);

std::vector<double> uniform_grid(double a, double b, int size);

}  // namespace fjm

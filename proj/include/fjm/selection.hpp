#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fjm/data.hpp"
#include "fjm/mcem.hpp"
#include "fjm/params.hpp"

namespace fjm {

/// Effective parameter count of a (J, c, L0, L1, P) model.
int degrees_of_freedom(int J, int c, int L0, int L1, int P);

inline double aic(double neg2_loglik, int df) { return neg2_loglik + 2.0 * df; }
double bic(double neg2_loglik, int df, int n);

/// -2 sum_i [log f(y_i) + log Q^{-1} sum_q f(T_i, Delta_i | b_q)] with b_q
/// drawn from f(b | y_i). Same seed, same draws.
double neg2_loglik(const JoinedData& data, const ModelParams& params, int Q, std::uint64_t seed);

struct GridCell {
  int L0 = 0;
  int L1 = 0;
  double neg2_loglik = 0.0;
  int df = 0;
  double aic = 0.0;
  double bic = 0.0;
  bool converged = false;
  bool failed = false;
  bool pruned = false;
  int iterations = 0;
  std::string message;
};

struct SelectionGrid {
  std::vector<GridCell> cells;
  int best_aic = -1;  // index into cells
  int best_bic = -1;
  /// No converged cell existed; winners were chosen among finite cells.
  bool used_unconverged = false;
};

struct SelectOptions {
  std::vector<int> L0 = {1, 2, 3};
  std::vector<int> L1 = {1, 2, 3};
  BasisConfig basis;
  EmConfig em;
  bool pve_prune = false;
  double pve_threshold = 0.9;
  /// Prefer converged cells; false ranks every finite cell alike.
  bool require_converged = true;
  /// Gamma mask builder per (L0, L1); empty = all free.
  std::function<Eigen::VectorXi(int L0, int L1)> gamma_mask;
};

using CellCallback = std::function<void(const GridCell&)>;

/// Fits every (L0, L1) cell (two-step start, then MCEM with the shared
/// master seed) and marks the AIC and BIC winners. Throws AllCellsFailed.
SelectionGrid select_ranks(const JoinedData& data, const SelectOptions& options, const CellCallback& on_cell = {});

/// Winner indices among the given cells: minimum criterion, ties to the
/// smaller L0 + L1 and then the smaller L0. Converged cells win over
/// unconverged ones unless require_converged is false. Fills best_* and
/// used_unconverged.
void choose_winners(SelectionGrid& grid, bool require_converged = true);

}  // namespace fjm

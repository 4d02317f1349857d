#include "fjm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fjm/error.hpp"
#include "fjm/estep.hpp"
#include "fjm/scores.hpp"
#include "fjm/twostep.hpp"

namespace fjm {

int degrees_of_freedom(int J, int c, int L0, int L1, int P) {
  return J * c + (L0 + L1) * (c + 1) + P + L0 + J * L1 + 2 * J - 1 - L0 * (L0 + 1) / 2 - L1 * (L1 + 1) / 2;
}

double bic(double neg2_loglik, int df, int n) { return neg2_loglik + std::log(static_cast<double>(n)) * df; }

double neg2_loglik(const JoinedData& data, const ModelParams& params, int Q, std::uint64_t seed) {
  const OrthonormalBasis basis(params.basis);
  const std::vector<SubjectDesign> designs = build_designs(data.subjects, basis);
  return -2.0 * marginal_loglik(data.subjects, designs, params, Q, seed).loglik;
}

namespace {

int pick(const std::vector<GridCell>& cells, bool need_converged, double GridCell::*crit) {
  int best = -1;
  for (int k = 0; k < static_cast<int>(cells.size()); ++k) {
    const GridCell& c = cells[k];
    if (c.failed || c.pruned || !std::isfinite(c.*crit)) continue;
    if (need_converged && !c.converged) continue;
    if (best < 0) {
      best = k;
      continue;
    }
    const GridCell& b = cells[best];
    if (c.*crit < b.*crit ||
        (c.*crit == b.*crit &&
         (c.L0 + c.L1 < b.L0 + b.L1 || (c.L0 + c.L1 == b.L0 + b.L1 && c.L0 < b.L0))))
      best = k;
  }
  return best;
}

}  // namespace

void choose_winners(SelectionGrid& grid, bool require_converged) {
  grid.best_aic = pick(grid.cells, require_converged, &GridCell::aic);
  grid.best_bic = pick(grid.cells, require_converged, &GridCell::bic);
  grid.used_unconverged = false;
  if (!require_converged) {
    const auto& a = grid.cells[grid.best_aic >= 0 ? grid.best_aic : 0];
    const auto& b = grid.cells[grid.best_bic >= 0 ? grid.best_bic : 0];
    grid.used_unconverged = (grid.best_aic >= 0 && !a.converged) || (grid.best_bic >= 0 && !b.converged);
  }
  if (grid.best_aic < 0 || grid.best_bic < 0) {
    grid.best_aic = pick(grid.cells, false, &GridCell::aic);
    grid.best_bic = pick(grid.cells, false, &GridCell::bic);
    grid.used_unconverged = true;
  }
  if (grid.best_aic < 0 || grid.best_bic < 0) throw Error(Errc::AllCellsFailed, "no grid cell produced a finite fit");
}

SelectionGrid select_ranks(const JoinedData& data, const SelectOptions& options, const CellCallback& on_cell) {
  if (options.L0.empty() || options.L1.empty()) throw Error(Errc::Usage, "rank grid is empty");
  SelectionGrid grid;

  int max0 = std::numeric_limits<int>::max(), max1 = std::numeric_limits<int>::max();
  if (options.pve_prune) {
    int top0 = 0, top1 = 0;
    for (int v : options.L0) top0 = std::max(top0, v);
    for (int v : options.L1) top1 = std::max(top1, v);
    const TwoStepFit ts = fit_two_step(data, top0, top1, options.basis);
    max0 = pve_rank(ts.spectrum0, options.pve_threshold) + 1;
    max1 = pve_rank(ts.spectrum1, options.pve_threshold) + 1;
  }

  for (int L0 : options.L0)
    for (int L1 : options.L1) {
      GridCell cell;
      cell.L0 = L0;
      cell.L1 = L1;
      cell.df = degrees_of_freedom(data.J, options.basis.c, L0, L1, data.P);
      cell.neg2_loglik = cell.aic = cell.bic = std::numeric_limits<double>::quiet_NaN();
      if (L0 > max0 || L1 > max1) {
        cell.pruned = true;
        cell.message = "pruned by PVE";
      } else {
        try {
          EmConfig em = options.em;
          const Eigen::VectorXi mask = options.gamma_mask ? options.gamma_mask(L0, L1) : Eigen::VectorXi();
          em.gamma_mask = mask;
          const TwoStepFit ts = fit_two_step(data, L0, L1, options.basis, mask);
          const FitResult fr = fit(data, init_from_two_step(ts), em);
          cell.neg2_loglik = fr.report.neg2_loglik;
          cell.df = fr.report.df;
          cell.aic = fr.report.aic;
          cell.bic = fr.report.bic;
          cell.converged = fr.report.converged;
          cell.iterations = fr.report.iterations;
          cell.message = fr.report.stop_reason;
        } catch (const Error& e) {
          cell.failed = true;
          cell.message = e.what();
        }
      }
      grid.cells.push_back(cell);
      if (on_cell) on_cell(cell);
    }
  choose_winners(grid, options.require_converged);
  return grid;
}

}  // namespace fjm

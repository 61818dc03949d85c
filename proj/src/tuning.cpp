#include "fleet/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fleet/core.hpp"

namespace fleet {

TuneResult tune_lambda_for_k(const FleetDataset& fleet, int k_target, const SolverConfig& base_cfg,
                             int max_bisections) {
  fleet.validate();
  if (k_target < 0 || k_target > fleet.size())
    throw std::invalid_argument("tune_lambda_for_k: k_target out of range");

  double lambda_max = compute_lambda_max(fleet, base_cfg.p, base_cfg.ridge_fallback);
  auto solve_at = [&](double lambda, const std::optional<WarmStart>& warm) {
    SolverConfig cfg = base_cfg;
    cfg.lambda = lambda;
    return solve_group_lasso(fleet, cfg, warm);
  };

  TuneResult best;
  if (k_target == 0 || lambda_max == 0.0) {
    best.lambda = std::max(lambda_max, 1e-300);
    best.solution = solve_at(best.lambda, std::nullopt);
    best.achieved_k = static_cast<int>(best.solution.flagged.size());
    best.exact = best.achieved_k == k_target;
    return best;
  }

  // count(lo) >= k_target >= count(hi) is maintained whenever achievable
  double lo = lambda_max * 1e-6;
  double hi = lambda_max;
  best.achieved_k = -1;

  auto consider = [&](double lambda, Solution sol) {
    int k = static_cast<int>(sol.flagged.size());
    bool better;
    if (best.achieved_k < 0) {
      better = true;
    } else {
      int cur = std::abs(best.achieved_k - k_target);
      int cand = std::abs(k - k_target);
      // prefer closer counts; among equals prefer the smaller count
      better = cand < cur || (cand == cur && k < best.achieved_k);
    }
    if (better) {
      best.lambda = lambda;
      best.achieved_k = k;
      best.solution = std::move(sol);
      best.exact = k == k_target;
    }
    return k;
  };

  std::optional<WarmStart> warm;
  int k_lo = consider(lo, solve_at(lo, warm));
  if (k_lo < k_target) {
    // even near-zero lambda does not reach k_target; widen downward
    for (int i = 0; i < 8 && k_lo < k_target; ++i) {
      lo *= 1e-2;
      k_lo = consider(lo, solve_at(lo, warm));
    }
  }
  if (best.exact) return best;
  int k_hi = consider(hi, solve_at(hi, warm));
  if (best.exact) return best;
  if (k_lo < k_target || k_hi > k_target) return best;  // bracket unattainable

  for (int i = 0; i < max_bisections; ++i) {
    double mid = std::sqrt(lo * hi);  // log-scale midpoint
    if (mid <= lo || mid >= hi) break;
    Solution sol = solve_at(mid, warm);
    warm = WarmStart{sol.nominal, sol.per_system};
    int k = consider(mid, std::move(sol));
    if (best.exact) return best;
    if (k > k_target)
      lo = mid;
    else
      hi = mid;
  }
  return best;
}

BicScore bic_score(const FleetDataset& fleet, const Solution& sol) {
  fleet.validate();
  if (static_cast<int>(sol.per_system.size()) != fleet.size())
    throw std::invalid_argument("bic_score: solution does not match fleet");
  BicScore score;
  double sse = 0.0;
  for (int i = 0; i < fleet.size(); ++i) sse += residual_sse(fleet.systems[i], sol.per_system[i]);
  score.sse = sse;
  const double total = static_cast<double>(fleet.total_observations());
  score.df = fleet.dim() * (1 + static_cast<int>(sol.flagged.size()));
  double y2 = 0.0;
  for (const auto& s : fleet.systems) y2 += s.measurements.squaredNorm();
  if (sse <= 1e-14 * y2) {
    score.zero_sse = true;
    score.value = -std::numeric_limits<double>::infinity();
    return score;
  }
  score.value = total * std::log(sse / total) + score.df * std::log(total);
  return score;
}

BicSelection select_lambda_bic(const FleetDataset& fleet, std::vector<double> lambda_grid,
                               const SolverConfig& base_cfg) {
  if (lambda_grid.empty()) throw std::invalid_argument("select_lambda_bic: empty grid");
  std::sort(lambda_grid.begin(), lambda_grid.end(), std::greater<double>());
  lambda_grid.erase(std::unique(lambda_grid.begin(), lambda_grid.end()), lambda_grid.end());
  for (double l : lambda_grid)
    if (l <= 0.0) throw std::invalid_argument("select_lambda_bic: grid values must be positive");

  BicSelection sel;
  std::optional<WarmStart> warm;
  double best_bic = std::numeric_limits<double>::infinity();
  for (double lambda : lambda_grid) {
    BicRow row;
    row.lambda = lambda;
    try {
      SolverConfig cfg = base_cfg;
      cfg.lambda = lambda;
      Solution sol = solve_group_lasso(fleet, cfg, warm);
      warm = WarmStart{sol.nominal, sol.per_system};
      auto score = bic_score(fleet, sol);
      row.k = static_cast<int>(sol.flagged.size());
      row.sse = score.sse;
      row.bic = score.value;
      if (score.value < best_bic) {
        best_bic = score.value;
        sel.best_lambda = lambda;
        sel.best_index = static_cast<int>(sel.table.size());
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    sel.table.push_back(std::move(row));
  }
  if (sel.best_index < 0) throw std::runtime_error("select_lambda_bic: every grid point failed");
  return sel;
}

}  // namespace fleet

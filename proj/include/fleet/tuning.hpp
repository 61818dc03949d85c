#pragma once

#include <string>
#include <vector>

#include "fleet/solver.hpp"
#include "fleet/types.hpp"

namespace fleet {

struct TuneResult {
  double lambda = 0.0;
  int achieved_k = 0;
  bool exact = false;  // flagged count matches the requested k
  Solution solution;
};

/// Bisection on lambda in (0, lambda_max], anchored at the closed-form
/// lambda_max, searching for a solution with exactly k_target flagged
/// systems. When the support count jumps over k_target, returns the closest
/// achieved count, preferring the smaller one.
TuneResult tune_lambda_for_k(const FleetDataset& fleet, int k_target, const SolverConfig& base_cfg,
                             int max_bisections = 60);

/// BIC with T = total observation count and df = m * (1 + |flagged|):
///   T log(SSE / T) + df log(T).
/// Returns -infinity (with the zero_sse flag) when the fit is exact.
struct BicScore {
  double value = 0.0;
  bool zero_sse = false;
  double sse = 0.0;
  int df = 0;
};

BicScore bic_score(const FleetDataset& fleet, const Solution& sol);

struct BicRow {
  double lambda = 0.0;
  int k = 0;
  double sse = 0.0;
  double bic = 0.0;
  bool failed = false;
  std::string error;
};

struct BicSelection {
  double best_lambda = 0.0;
  int best_index = -1;
  std::vector<BicRow> table;
};

/// Solves the relaxation at every (deduplicated) grid point, warm-starting
/// from the previous solution, and returns the BIC minimizer.
BicSelection select_lambda_bic(const FleetDataset& fleet, std::vector<double> lambda_grid,
                               const SolverConfig& base_cfg);

}  // namespace fleet

#pragma once

#include <vector>

#include "fleet/types.hpp"

namespace fleet {

/// Ridge-fused comparator: minimize
///   sum_i ||Y_i - Phi_i theta_i||^2 + (lambda/2) sum_i ||theta - theta_i||_2^2
/// via its exact normal equations (block elimination through the m x m
/// nominal system). Deviations are generically all nonzero, so flagging
/// needs a caller-supplied threshold.
Solution solve_tikhonov(const FleetDataset& fleet, double lambda, double flag_threshold = 1e-8);

struct ThresholdReport {
  std::vector<int> flagged;       // 1-based tags
  double min_flagged = 0.0;       // smallest deviation above the threshold
  double max_unflagged = 0.0;     // largest deviation below it
  double margin_ratio = 0.0;      // min_flagged / max_unflagged (inf if clean)
};

ThresholdReport threshold_report(const Solution& sol, double threshold);

}  // namespace fleet

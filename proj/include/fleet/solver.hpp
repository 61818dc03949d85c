#pragma once

#include <optional>
#include <vector>

#include "fleet/core.hpp"
#include "fleet/types.hpp"

namespace fleet {

struct SolverConfig {
  double lambda = 0.0;
  int p = 2;
  int max_iterations = 20000;
  double objective_tolerance = 1e-10;  // relative decrease per sweep
  double kkt_tolerance = 1e-6;
  double support_tolerance = 1e-6;     // applied as tol * (1 + ||nominal||_p)
  bool ridge_fallback = false;
  int threads = 0;                     // 0: decide from FLEET_THREADS / hardware

  void validate() const;
};

struct WarmStart {
  Vec nominal;
  std::vector<Vec> per_system;
};

/// Block-coordinate solve of the sum-of-norms regularized joint estimate:
///   min over (theta, theta_1..theta_N) of
///   sum_i ||Y_i - Phi_i theta_i||^2 + lambda sum_i ||theta - theta_i||_p.
/// Converged output certifies kkt_residual(sol) <= cfg.kkt_tolerance; raises
/// NonConvergenceError past the iteration cap.
Solution solve_group_lasso(const FleetDataset& fleet, const SolverConfig& cfg,
                           const std::optional<WarmStart>& warm = std::nullopt);

/// Smallest lambda for which the all-equal (pooled least squares) solution is
/// optimal: max_i ||2 Phi_i^T (Phi_i theta* - Y_i)||_d with d the dual norm
/// of p (see docs/lambda_max.md for the stationarity argument).
double compute_lambda_max(const FleetDataset& fleet, int p, bool ridge_fallback = false);

/// Maximum violation of the subgradient optimality system at `sol`:
/// per-block gradient equations on the active set, dual-norm bounds on the
/// zero-deviation blocks, and the nominal stationarity sum_i g_i = 0.
double kkt_residual(const FleetDataset& fleet, const Solution& sol, const SolverConfig& cfg);

/// {tags : deviation > support_tolerance} (absolute threshold).
std::vector<int> anomaly_support(const Solution& sol, double support_tolerance);

}  // namespace fleet

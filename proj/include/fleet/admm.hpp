#pragma once

#include <utility>
#include <vector>

#include "fleet/core.hpp"
#include "fleet/transport.hpp"
#include "fleet/types.hpp"

namespace fleet {

/// One node's slice of the consensus problem. Multipliers u, w are stored in
/// unscaled form, exactly as the per-iteration updates are written.
struct AdmmNodeState {
  int tag = 0;  // 1-based
  Mat gram;     // Phi^T Phi
  Vec phity;    // Phi^T Y
  double yty = 0.0;
  Vec alpha, beta;    // local copies of (theta_i, theta)
  Vec u, w;           // multiplier blocks
  Vec theta_i, theta; // local iterates

  // factorization of (2 gram + 2 rho I), rebuilt when rho changes
  Eigen::LDLT<Mat> quad_factor;
  double factor_rho = -1.0;

  void init(int tag_in, const SystemDataset& data);
  void refactor(double rho);
};

struct AdmmConfig {
  double rho = 1.0;
  bool adaptive_rho = true;
  double mu = 10.0;        // residual imbalance trigger
  double tau_incr = 2.0;
  double tau_decr = 2.0;
  double over_relaxation = 1.6;  // 1.0 disables; [1.5, 1.8] is the usual range
  // tight enough that fused blocks settle below the flag threshold; loosen
  // explicitly when iteration count matters more than support exactness
  double eps_abs = 1e-8;
  double eps_rel = 1e-9;
  int max_iterations = 20000;
  double inner_tolerance = 1e-10;
  int inner_cap = 200;
  double support_tolerance = 1e-6;
  int threads = 0;

  void validate() const;
};

/// theta_i <- alpha_i - u_i / rho.
void local_primal_update(AdmmNodeState& node, double rho);

/// theta <- (1/N) sum_j (beta_j - w_j / rho), summed in sender-tag order.
/// Requires exactly one frame per tag 1..N.
Vec consensus_update(const std::vector<BroadcastFrame>& received, double rho, int n_nodes);

/// Node-local 2m-variable subproblem
///   argmin ||Y_i - Phi_i a||^2 + lambda ||b - a||_p - u^T a - w^T b
///          + (rho/2)||theta_i - a||^2 + (rho/2)||theta - b||^2
/// solved by alternating an exact quadratic step in a with a closed-form
/// proximal step in delta = b - a. Returns (alpha, beta).
std::pair<Vec, Vec> local_subproblem(AdmmNodeState& node, const Vec& theta_i_new,
                                     const Vec& theta_new, double lambda, int p, double rho,
                                     const AdmmConfig& cfg);

/// u += rho (theta_i - alpha); w += rho (theta - beta).
void dual_update(AdmmNodeState& node, const Vec& theta_i_new, const Vec& theta_new, double rho);

struct StoppingThresholds {
  double eps_pri = 0.0;
  double eps_dual = 0.0;
  bool stop = false;
};

/// Standard consensus stopping rule:
///   eps_pri  = sqrt(2 N m) eps_abs + eps_rel max(||Ax||, ||z||)
///   eps_dual = sqrt((N+1) m) eps_abs + eps_rel ||nu||
/// where nu stacks every multiplier block. (For this splitting A^T nu tends
/// to zero at the optimum, which would make the relative part of the dual
/// threshold meaningless, so the full dual vector is the scale reference.)
StoppingThresholds stopping_check(double primal_residual, double dual_residual, double ax_norm,
                                  double z_norm, double nu_norm, int n_nodes, int dim,
                                  double eps_abs, double eps_rel);

/// Residual-balancing penalty update on threshold-normalized residuals:
/// grow by tau_incr when primal/eps_pri dominates dual/eps_dual by factor
/// mu, shrink by tau_decr in the opposite case. Normalizing keeps the rule
/// meaningful when the two thresholds live on very different scales.
/// Multipliers are unscaled here, so no rescaling accompanies the change.
double rho_update(double rho, double primal_residual, double dual_residual, double eps_pri,
                  double eps_dual, const AdmmConfig& cfg);

struct AdmmTraceRow {
  int iteration;
  double primal_residual;
  double dual_residual;
  double rho;
  double objective;
  std::vector<int> support;  // flagged tags at this iterate (in-memory only, not in the CSV)
};

/// Full distributed run over the given transport. Every node computes the
/// consensus average redundantly from the broadcasts (no coordinator).
Solution run_distributed(const FleetDataset& fleet, double lambda, int p, const AdmmConfig& cfg,
                         Transport& transport, std::vector<AdmmTraceRow>* trace = nullptr);

}  // namespace fleet

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace fleet {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One system's data batch: an Omega x m regressor matrix (row t is phi(t)^T)
/// and the Omega measurements.
struct SystemDataset {
  Mat regressors;
  Vec measurements;

  int omega() const { return static_cast<int>(measurements.size()); }
  int dim() const { return static_cast<int>(regressors.cols()); }

  /// Throws std::invalid_argument on shape mismatch or non-finite entries.
  void validate() const;
};

/// Ground truth attached to synthetic fleets.
struct TruthRecord {
  std::vector<Vec> true_params;   // one per system
  std::vector<int> anomalies;     // 1-based system tags, sorted
  double noise_variance = 0.0;
};

/// Ordered collection of N systems sharing the parameter dimension m.
/// Omega may vary per system. System indices are 1-based tags throughout.
struct FleetDataset {
  std::vector<SystemDataset> systems;
  std::optional<TruthRecord> truth;

  int size() const { return static_cast<int>(systems.size()); }
  int dim() const { return systems.empty() ? 0 : systems.front().dim(); }
  long total_observations() const;

  void validate() const;
};

/// A candidate anomaly subset (sorted, unique, 1-based tags).
struct Hypothesis {
  std::vector<int> anomaly_set;

  void validate(int n_systems) const;
};

struct SolveDiagnostics {
  std::string method;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = -1.0;
  std::vector<double> objective_trace;
  std::vector<double> primal_residuals;  // ADMM only
  std::vector<double> dual_residuals;    // ADMM only
  std::vector<double> rho_trace;         // ADMM only
};

/// Joint estimate: nominal parameter, per-system parameters, deviation norms
/// and the flagged anomaly set. `deviations[i] = ||per_system[i] - nominal||_p`
/// and `flagged = {tags with deviation > support_threshold}` are maintained by
/// construction (see make_solution).
struct Solution {
  Vec nominal;
  std::vector<Vec> per_system;
  std::vector<double> deviations;
  std::vector<int> flagged;            // 1-based tags, sorted
  double objective = 0.0;
  double support_threshold = 0.0;      // absolute threshold actually applied
  int p = 2;
  SolveDiagnostics diagnostics;
};

}  // namespace fleet

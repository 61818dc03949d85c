#pragma once

#include <cstdint>
#include <vector>

#include "fleet/types.hpp"

namespace fleet {

/// Exact C(N, k). Throws std::invalid_argument for negative inputs or k > N,
/// std::overflow_error if the result does not fit in 64 bits.
std::uint64_t binomial_count(int n, int k);

/// Per-system normal-equation cache: G = Phi^T Phi, b = Phi^T Y, yty = Y^T Y.
struct GramCache {
  Mat gram;
  Vec phity;
  double yty = 0.0;
  long omega = 0;

  static GramCache of(const SystemDataset& d);
};

/// Accumulated cache over a set of systems.
GramCache pooled_gram(const std::vector<GramCache>& caches);

/// Solve G theta = b. Throws SingularityError (with the numerical rank) when
/// G is rank deficient; with ridge_fallback, perturbs the diagonal by
/// 1e-10 * trace(G)/m instead and solves.
Vec solve_normal_equations(const Mat& gram, const Vec& rhs, bool ridge_fallback = false);

/// Numerical rank of a symmetric PSD matrix.
int gram_rank(const Mat& gram);

/// Least squares over one system.
Vec least_squares(const SystemDataset& data, bool ridge_fallback = false);

/// Pooled least squares over several systems (stacked residuals).
Vec least_squares(const std::vector<SystemDataset>& data, bool ridge_fallback = false);

/// Sum of squared residuals of theta on one system.
double residual_sse(const SystemDataset& data, const Vec& theta);

/// SSE from the cached quantities: yty - 2 theta.b + theta.G theta.
double residual_sse(const GramCache& cache, const Vec& theta);

/// Detectability report per Remark-1 style overlap analysis.
struct InformativityReport {
  // undetectable[i][q]: a deviation in element q of system i+1's parameter
  // cannot be detected (regressor column q of system i never co-excites
  // column q of any other system).
  std::vector<std::vector<bool>> undetectable;
  int pooled_rank = 0;
  int dim = 0;
};

InformativityReport informativity_check(const FleetDataset& fleet);

/// Eq.-style objective: sum_i ||Y_i - Phi_i theta_i||^2 + lambda sum_i ||theta - theta_i||_p.
double group_objective(const FleetDataset& fleet, const Vec& nominal,
                       const std::vector<Vec>& per_system, double lambda, int p);

/// Assembles a Solution with deviations/flagged/objective recomputed from
/// (nominal, per_system). support_tol_rel scales as tol*(1+||nominal||_p).
Solution make_solution(const FleetDataset& fleet, Vec nominal, std::vector<Vec> per_system,
                       double lambda, int p, double support_tol_rel, SolveDiagnostics diag);

}  // namespace fleet

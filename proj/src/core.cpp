#include "fleet/core.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fleet/errors.hpp"
#include "fleet/norms.hpp"

namespace fleet {

void SystemDataset::validate() const {
  if (measurements.size() < 1) throw std::invalid_argument("system has no measurements");
  if (regressors.cols() < 1) throw std::invalid_argument("system has zero-dimensional regressors");
  if (regressors.rows() != measurements.size())
    throw std::invalid_argument("regressor row count does not match measurement count");
  if (!regressors.allFinite() || !measurements.allFinite())
    throw std::invalid_argument("non-finite entry in system data");
}

long FleetDataset::total_observations() const {
  long total = 0;
  for (const auto& s : systems) total += s.omega();
  return total;
}

void FleetDataset::validate() const {
  if (systems.empty()) throw std::invalid_argument("fleet has no systems");
  const int m = systems.front().dim();
  for (const auto& s : systems) {
    s.validate();
    if (s.dim() != m) throw std::invalid_argument("systems disagree on parameter dimension");
  }
  if (truth) {
    for (int tag : truth->anomalies)
      if (tag < 1 || tag > size()) throw std::invalid_argument("truth anomaly tag out of range");
  }
}

void Hypothesis::validate(int n_systems) const {
  int prev = 0;
  for (int tag : anomaly_set) {
    if (tag < 1 || tag > n_systems) throw std::invalid_argument("hypothesis tag out of range");
    if (tag <= prev) throw std::invalid_argument("hypothesis tags must be sorted and unique");
    prev = tag;
  }
}

std::uint64_t binomial_count(int n, int k) {
  if (n < 0 || k < 0) throw std::invalid_argument("binomial_count: negative argument");
  if (k > n) throw std::invalid_argument("binomial_count: k exceeds N");
  if (k > n - k) k = n - k;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    // r*(n-k+i) == C(n-k+i, i) * i, so the division below is exact
    std::uint64_t prod;
    if (__builtin_mul_overflow(r, static_cast<std::uint64_t>(n - k + i), &prod))
      throw std::overflow_error("binomial_count overflow");
    r = prod / static_cast<std::uint64_t>(i);
  }
  return r;
}

GramCache GramCache::of(const SystemDataset& d) {
  GramCache c;
  c.gram = d.regressors.transpose() * d.regressors;
  c.phity = d.regressors.transpose() * d.measurements;
  c.yty = d.measurements.squaredNorm();
  c.omega = d.omega();
  return c;
}

GramCache pooled_gram(const std::vector<GramCache>& caches) {
  if (caches.empty()) throw std::invalid_argument("pooled_gram: empty cache list");
  GramCache out = caches.front();
  for (std::size_t i = 1; i < caches.size(); ++i) {
    out.gram += caches[i].gram;
    out.phity += caches[i].phity;
    out.yty += caches[i].yty;
    out.omega += caches[i].omega;
  }
  return out;
}

int gram_rank(const Mat& gram) {
  Eigen::SelfAdjointEigenSolver<Mat> es(gram);
  const auto& ev = es.eigenvalues();
  double tol = gram.rows() * std::numeric_limits<double>::epsilon() *
               std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  int rank = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > tol) ++rank;
  return rank;
}

Vec solve_normal_equations(const Mat& gram, const Vec& rhs, bool ridge_fallback) {
  const int m = static_cast<int>(gram.rows());
  int rank = gram_rank(gram);
  if (rank < m) {
    if (!ridge_fallback)
      throw SingularityError("rank-deficient Gram matrix (rank " + std::to_string(rank) + " of " +
                                 std::to_string(m) + ")",
                             rank, m);
    Mat shifted = gram;
    shifted.diagonal().array() += 1e-10 * gram.trace() / m;
    return shifted.ldlt().solve(rhs);
  }
  return gram.ldlt().solve(rhs);
}

Vec least_squares(const SystemDataset& data, bool ridge_fallback) {
  auto c = GramCache::of(data);
  return solve_normal_equations(c.gram, c.phity, ridge_fallback);
}

Vec least_squares(const std::vector<SystemDataset>& data, bool ridge_fallback) {
  if (data.empty()) throw std::invalid_argument("least_squares: empty system list");
  std::vector<GramCache> caches;
  caches.reserve(data.size());
  for (const auto& d : data) caches.push_back(GramCache::of(d));
  auto pooled = pooled_gram(caches);
  return solve_normal_equations(pooled.gram, pooled.phity, ridge_fallback);
}

double residual_sse(const SystemDataset& data, const Vec& theta) {
  if (theta.size() != data.dim()) throw std::invalid_argument("residual_sse: dimension mismatch");
  return (data.measurements - data.regressors * theta).squaredNorm();
}

double residual_sse(const GramCache& cache, const Vec& theta) {
  double v = cache.yty - 2.0 * theta.dot(cache.phity) + theta.dot(cache.gram * theta);
  return std::max(v, 0.0);
}

InformativityReport informativity_check(const FleetDataset& fleet) {
  fleet.validate();
  const int n = fleet.size();
  const int m = fleet.dim();
  InformativityReport rep;
  rep.dim = m;
  rep.undetectable.assign(n, std::vector<bool>(m, false));

  // Column activity per system, with a scale-relative zero test.
  std::vector<std::vector<bool>> active(n, std::vector<bool>(m, false));
  for (int i = 0; i < n; ++i) {
    const Mat& phi = fleet.systems[i].regressors;
    double scale = std::max(phi.cwiseAbs().maxCoeff(), 1.0);
    for (int q = 0; q < m; ++q)
      active[i][q] = phi.col(q).cwiseAbs().maxCoeff() > 1e-14 * scale;
  }
  for (int q = 0; q < m; ++q) {
    int n_active = 0;
    for (int i = 0; i < n; ++i) n_active += active[i][q];
    for (int i = 0; i < n; ++i) {
      // phi_i^T(t1) Q phi_j(t2) == 0 for all j != i iff column q is dead on
      // system i or on every other system.
      bool overlap = active[i][q] && (n_active - active[i][q] > 0);
      rep.undetectable[i][q] = !overlap;
    }
  }

  std::vector<GramCache> caches;
  caches.reserve(n);
  for (const auto& s : fleet.systems) caches.push_back(GramCache::of(s));
  rep.pooled_rank = gram_rank(pooled_gram(caches).gram);
  return rep;
}

double group_objective(const FleetDataset& fleet, const Vec& nominal,
                       const std::vector<Vec>& per_system, double lambda, int p) {
  check_p(p);
  if (static_cast<int>(per_system.size()) != fleet.size())
    throw std::invalid_argument("group_objective: per_system size mismatch");
  double obj = 0.0;
  for (int i = 0; i < fleet.size(); ++i) {
    obj += residual_sse(fleet.systems[i], per_system[i]);
    obj += lambda * norm_p(nominal - per_system[i], p);
  }
  return obj;
}

Solution make_solution(const FleetDataset& fleet, Vec nominal, std::vector<Vec> per_system,
                       double lambda, int p, double support_tol_rel, SolveDiagnostics diag) {
  Solution sol;
  sol.p = p;
  sol.nominal = std::move(nominal);
  sol.per_system = std::move(per_system);
  sol.support_threshold = support_tol_rel * (1.0 + norm_p(sol.nominal, p));
  sol.deviations.resize(sol.per_system.size());
  for (std::size_t i = 0; i < sol.per_system.size(); ++i) {
    sol.deviations[i] = norm_p(sol.per_system[i] - sol.nominal, p);
    if (sol.deviations[i] > sol.support_threshold) sol.flagged.push_back(static_cast<int>(i) + 1);
  }
  sol.objective = group_objective(fleet, sol.nominal, sol.per_system, lambda, p);
  sol.diagnostics = std::move(diag);
  return sol;
}

}  // namespace fleet

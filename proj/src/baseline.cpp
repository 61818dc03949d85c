#include "fleet/baseline.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "fleet/core.hpp"
#include "fleet/errors.hpp"

namespace fleet {

Solution solve_tikhonov(const FleetDataset& fleet, double lambda, double flag_threshold) {
  fleet.validate();
  if (lambda < 0.0) throw std::invalid_argument("solve_tikhonov: lambda must be nonnegative");
  const int n = fleet.size();
  const int m = fleet.dim();

  std::vector<GramCache> caches;
  caches.reserve(n);
  for (const auto& s : fleet.systems) caches.push_back(GramCache::of(s));

  std::vector<Vec> per(n);
  Vec nominal;
  if (lambda == 0.0) {
    for (int i = 0; i < n; ++i)
      per[i] = solve_normal_equations(caches[i].gram, caches[i].phity);  // may raise singularity
    nominal = Vec::Zero(m);
    for (const auto& v : per) nominal += v;
    nominal /= n;
  } else {
    // stationarity: (2 G_i + lambda I) theta_i = 2 b_i + lambda theta,
    //               theta = mean_i theta_i.
    // eliminate the theta_i blocks into an m x m system for theta.
    std::vector<Eigen::LDLT<Mat>> factors;
    factors.reserve(n);
    Mat coupling = Mat::Identity(m, m);
    Vec drive = Vec::Zero(m);
    for (int i = 0; i < n; ++i) {
      Mat q = 2.0 * caches[i].gram;
      q.diagonal().array() += lambda;
      factors.emplace_back(q);
      coupling -= (lambda / n) * factors.back().solve(Mat::Identity(m, m));
      drive += factors.back().solve(2.0 * caches[i].phity) / n;
    }
    nominal = coupling.lu().solve(drive);
    for (int i = 0; i < n; ++i)
      per[i] = factors[i].solve(2.0 * caches[i].phity + lambda * nominal);
  }

  SolveDiagnostics diag;
  diag.method = "tikhonov";
  diag.converged = true;
  Solution sol;
  sol.p = 2;
  sol.nominal = std::move(nominal);
  sol.per_system = std::move(per);
  sol.support_threshold = flag_threshold;
  sol.deviations.resize(n);
  double obj = 0.0;
  for (int i = 0; i < n; ++i) {
    sol.deviations[i] = (sol.per_system[i] - sol.nominal).norm();
    if (sol.deviations[i] > flag_threshold) sol.flagged.push_back(i + 1);
    obj += residual_sse(fleet.systems[i], sol.per_system[i]) +
           0.5 * lambda * sol.deviations[i] * sol.deviations[i];
  }
  sol.objective = obj;
  sol.diagnostics = std::move(diag);
  return sol;
}

ThresholdReport threshold_report(const Solution& sol, double threshold) {
  if (threshold <= 0.0) throw std::invalid_argument("threshold_report: threshold must be positive");
  ThresholdReport rep;
  rep.min_flagged = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sol.deviations.size(); ++i) {
    double d = sol.deviations[i];
    if (d > threshold) {
      rep.flagged.push_back(static_cast<int>(i) + 1);
      rep.min_flagged = std::min(rep.min_flagged, d);
    } else {
      rep.max_unflagged = std::max(rep.max_unflagged, d);
    }
  }
  if (rep.flagged.empty()) {
    rep.min_flagged = 0.0;
    rep.margin_ratio = 0.0;
  } else {
    rep.margin_ratio = rep.max_unflagged > 0.0 ? rep.min_flagged / rep.max_unflagged
                                               : std::numeric_limits<double>::infinity();
  }
  return rep;
}

}  // namespace fleet

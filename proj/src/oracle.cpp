#include "fleet/oracle.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "fleet/errors.hpp"

namespace fleet {

namespace {

// Shared per-call cache so the pooled solve is an O(m^2) downdate per
// hypothesis instead of a refit over raw data.
struct EnumContext {
  std::vector<GramCache> caches;
  GramCache total;
};

EnumContext build_context(const FleetDataset& fleet) {
  EnumContext ctx;
  ctx.caches.reserve(fleet.systems.size());
  for (const auto& s : fleet.systems) ctx.caches.push_back(GramCache::of(s));
  ctx.total = pooled_gram(ctx.caches);
  return ctx;
}

HypothesisFit evaluate(const EnumContext& ctx, const FleetDataset& fleet, const Hypothesis& h) {
  const int n = fleet.size();
  if (static_cast<int>(h.anomaly_set.size()) >= n)
    throw std::invalid_argument("hypothesis leaves no normal group");

  Mat gram = ctx.total.gram;
  Vec rhs = ctx.total.phity;
  double yty = ctx.total.yty;
  for (int tag : h.anomaly_set) {
    const auto& c = ctx.caches[tag - 1];
    gram -= c.gram;
    rhs -= c.phity;
    yty -= c.yty;
  }

  HypothesisFit fit;
  fit.hypothesis = h;
  try {
    fit.nominal = solve_normal_equations(gram, rhs);
  } catch (const SingularityError& e) {
    throw SingularityError("pooled fit singular for hypothesis (" + std::string(e.what()) + ")",
                           e.rank, e.required);
  }
  double cost = yty - 2.0 * fit.nominal.dot(rhs) + fit.nominal.dot(gram * fit.nominal);
  cost = std::max(cost, 0.0);

  for (int tag : h.anomaly_set) {
    const auto& c = ctx.caches[tag - 1];
    Vec theta;
    try {
      theta = solve_normal_equations(c.gram, c.phity);
    } catch (const SingularityError& e) {
      throw SingularityError("own fit singular for system " + std::to_string(tag), e.rank,
                             e.required);
    }
    cost += residual_sse(c, theta);
    fit.anomal_params.emplace(tag, std::move(theta));
  }
  fit.cost = cost;
  return fit;
}

}  // namespace

HypothesisFit solve_hypothesis(const FleetDataset& fleet, const Hypothesis& h) {
  fleet.validate();
  h.validate(fleet.size());
  return evaluate(build_context(fleet), fleet, h);
}

BruteForceResult brute_force_detect(const FleetDataset& fleet, int k, std::uint64_t cap) {
  fleet.validate();
  const int n = fleet.size();
  if (k < 0 || k >= n) throw std::invalid_argument("brute_force_detect: need 0 <= k < N");
  std::uint64_t count = binomial_count(n, k);
  if (count > cap)
    throw EnumerationCapError("C(" + std::to_string(n) + "," + std::to_string(k) + ") = " +
                                  std::to_string(count) +
                                  " exceeds the enumeration cap; use the relaxation solver",
                              count);

  auto ctx = build_context(fleet);
  BruteForceResult result;
  result.ranking.reserve(static_cast<std::size_t>(count));

  // k-subsets in lexicographic order; first strict improvement wins ties.
  std::vector<int> subset(k);
  for (int i = 0; i < k; ++i) subset[i] = i + 1;
  bool have_best = false;
  while (true) {
    Hypothesis h{subset};
    auto fit = evaluate(ctx, fleet, h);
    result.ranking.emplace_back(fit.cost, h);
    if (!have_best || fit.cost < result.best.cost) {
      result.best = std::move(fit);
      have_best = true;
    }
    // advance
    int pos = k - 1;
    while (pos >= 0 && subset[pos] == n - (k - 1 - pos)) --pos;
    if (pos < 0) break;
    ++subset[pos];
    for (int j = pos + 1; j < k; ++j) subset[j] = subset[j - 1] + 1;
  }

  std::stable_sort(result.ranking.begin(), result.ranking.end(),
                   [](const auto& a, const auto& b) {
                     if (a.first != b.first) return a.first < b.first;
                     return a.second.anomaly_set < b.second.anomaly_set;
                   });
  return result;
}

}  // namespace fleet

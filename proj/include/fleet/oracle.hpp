#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "fleet/core.hpp"
#include "fleet/types.hpp"

namespace fleet {

struct HypothesisFit {
  Hypothesis hypothesis;
  double cost = 0.0;          // total SSE across both groups
  Vec nominal;                // pooled fit over the assumed-normal group
  std::map<int, Vec> anomal_params;  // tag -> own least squares
};

/// Evaluate one hypothesis: pooled least squares over the complement of the
/// anomaly set, individual least squares inside it. Rejects the degenerate
/// all-anomalous hypothesis (no normal group left).
HypothesisFit solve_hypothesis(const FleetDataset& fleet, const Hypothesis& h);

struct BruteForceResult {
  HypothesisFit best;
  std::vector<std::pair<double, Hypothesis>> ranking;  // sorted by cost, lexicographic ties
};

/// Exhaustive k-subset search. Refuses (EnumerationCapError) when C(N,k)
/// exceeds the cap; ties broken by lexicographically smallest subset.
BruteForceResult brute_force_detect(const FleetDataset& fleet, int k,
                                    std::uint64_t enumeration_cap = 1000000);

}  // namespace fleet

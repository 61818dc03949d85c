#pragma once

#include <stdexcept>
#include <string>

namespace fleet {

/// Rank-deficient normal equations. Carries the numerical rank that was found.
class SingularityError : public std::runtime_error {
 public:
  SingularityError(const std::string& what, int rank_found, int rank_needed)
      : std::runtime_error(what), rank(rank_found), required(rank_needed) {}
  int rank;
  int required;
};

/// Iterative solve hit its iteration cap before reaching tolerance.
class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, int iters, double resid)
      : std::runtime_error(what), iterations(iters), residual(resid) {}
  int iterations;
  double residual;
};

/// Broadcast protocol violation (missing, duplicate or malformed message).
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

/// Exact enumeration refused because the hypothesis count exceeds the cap.
class EnumerationCapError : public std::runtime_error {
 public:
  EnumerationCapError(const std::string& what, unsigned long long hypothesis_count)
      : std::runtime_error(what), count(hypothesis_count) {}
  unsigned long long count;
};

}  // namespace fleet

#pragma once

#include <cmath>
#include <stdexcept>

#include "fleet/types.hpp"

namespace fleet {

inline void check_p(int p) {
  if (p != 1 && p != 2) throw std::invalid_argument("p must be 1 or 2");
}

inline double norm_p(const Vec& v, int p) {
  return p == 1 ? v.lpNorm<1>() : v.norm();
}

/// Dual norm of ||.||_p: infinity-norm for p=1, 2-norm for p=2.
inline double dual_norm(const Vec& v, int p) {
  return p == 1 ? v.lpNorm<Eigen::Infinity>() : v.norm();
}

/// prox_{t ||.||_p}(v): soft threshold for p=1, block soft threshold for p=2.
/// Returns an exact zero vector when v lies inside the threshold ball.
inline Vec prox_norm(const Vec& v, double t, int p) {
  if (t <= 0.0) return v;
  if (p == 1) {
    Vec out(v.size());
    for (Eigen::Index q = 0; q < v.size(); ++q) {
      double a = std::abs(v[q]) - t;
      out[q] = a > 0.0 ? (v[q] > 0.0 ? a : -a) : 0.0;
    }
    return out;
  }
  double n = v.norm();
  if (n <= t) return Vec::Zero(v.size());
  return (1.0 - t / n) * v;
}

}  // namespace fleet

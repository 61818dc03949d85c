#include "fleet/solver.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fleet/errors.hpp"
#include "fleet/norms.hpp"
#include "fleet/parallel.hpp"

namespace fleet {

void SolverConfig::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  check_p(p);
  if (objective_tolerance <= 0.0 || kkt_tolerance <= 0.0 || support_tolerance <= 0.0)
    throw std::invalid_argument("tolerances must be positive");
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be positive");
}

namespace {

struct SystemCache {
  Mat gram;
  Vec phity;
  double yty = 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> eig;  // of gram, for the p=2 secular solve
};

std::vector<SystemCache> build_caches(const FleetDataset& fleet) {
  std::vector<SystemCache> caches(fleet.size());
  for (int i = 0; i < fleet.size(); ++i) {
    auto g = GramCache::of(fleet.systems[i]);
    caches[i].gram = std::move(g.gram);
    caches[i].phity = std::move(g.phity);
    caches[i].yty = g.yty;
    caches[i].eig.compute(caches[i].gram);
  }
  return caches;
}

Vec block_gradient(const SystemCache& c, const Vec& theta_i) {
  return 2.0 * (c.gram * theta_i - c.phity);
}

// argmin_v ||Y - Phi v||^2 + lambda ||v - anchor||_2.
// Either v == anchor exactly (dual bound holds) or v solves the stationarity
// system (2G + mu I)(v - anchor) = 2(b - G anchor) with mu = lambda/||v-anchor||,
// found by a safeguarded scalar root solve in mu.
Vec block_step_p2(const SystemCache& c, const Vec& anchor, double lambda) {
  Vec r0 = 2.0 * (c.phity - c.gram * anchor);
  double r0n = r0.norm();
  if (r0n <= lambda) return anchor;

  const Vec d = 2.0 * c.eig.eigenvalues();
  const Vec q = c.eig.eigenvectors().transpose() * r0;  // coordinates of r0
  auto weighted_norm = [&](double mu) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      double t = q[k] / (d[k] + mu);
      s += t * t;
    }
    return std::sqrt(s);
  };
  // h(mu) = mu * ||w(mu)|| - lambda is increasing, h(0+) < 0, h(inf) = ||r0|| - lambda > 0.
  double lo = 0.0, hi = std::max(lambda, 1.0);
  while (hi * weighted_norm(hi) < lambda) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (mid * weighted_norm(mid) < lambda)
      lo = mid;
    else
      hi = mid;
  }
  double mu = 0.5 * (lo + hi);
  Vec w = c.eig.eigenvectors() * (q.array() / (d.array() + mu)).matrix();
  return anchor + w;
}

// Coordinate descent for argmin_v ||Y - Phi v||^2 + lambda ||v - anchor||_1.
Vec block_step_p1(const SystemCache& c, const Vec& anchor, double lambda, const Vec& init) {
  const int m = static_cast<int>(anchor.size());
  Vec w = init - anchor;
  Vec gw = c.gram * (anchor + w) - c.phity;  // half-gradient of the quadratic
  for (int sweep = 0; sweep < 10000; ++sweep) {
    double change = 0.0;
    for (int qi = 0; qi < m; ++qi) {
      double a = c.gram(qi, qi);
      if (a <= 0.0) continue;
      // partial residual with w[qi] removed
      double cq = gw[qi] - a * w[qi];
      double z = -cq;
      double half = 0.5 * lambda;
      double wq = 0.0;
      if (z > half)
        wq = (z - half) / a;
      else if (z < -half)
        wq = (z + half) / a;
      double delta = wq - w[qi];
      if (delta != 0.0) {
        w[qi] = wq;
        gw += delta * c.gram.col(qi);
        change = std::max(change, std::abs(delta));
      }
    }
    if (change <= 1e-14 * (1.0 + w.cwiseAbs().maxCoeff())) break;
  }
  return anchor + w;
}

Vec block_step(const SystemCache& c, const Vec& anchor, double lambda, int p, const Vec& init) {
  return p == 2 ? block_step_p2(c, anchor, lambda) : block_step_p1(c, anchor, lambda, init);
}

// Modified Weiszfeld (coincident points handled by the k/r correction).
Vec geometric_median(const std::vector<Vec>& pts, Vec y) {
  const double tol = 1e-13;
  for (int it = 0; it < 20000; ++it) {
    double scale = 1.0 + y.norm();
    Vec t = Vec::Zero(y.size());
    Vec grad_dir = Vec::Zero(y.size());
    double wsum = 0.0;
    int coincident = 0;
    for (const auto& x : pts) {
      double dist = (x - y).norm();
      if (dist <= 1e-14 * scale) {
        ++coincident;
        continue;
      }
      t += x / dist;
      grad_dir += (x - y) / dist;
      wsum += 1.0 / dist;
    }
    if (wsum == 0.0) return y;  // everything coincident
    double r = grad_dir.norm();
    if (coincident > 0 && r <= coincident) return y;
    Vec tpoint = t / wsum;
    Vec ynew = coincident > 0
                   ? (1.0 - coincident / r) * tpoint + (coincident / r) * y
                   : tpoint;
    if ((ynew - y).norm() <= tol * scale) return ynew;
    y = std::move(ynew);
  }
  return y;
}

Vec coordinate_median(const std::vector<Vec>& pts) {
  const int m = static_cast<int>(pts.front().size());
  const int n = static_cast<int>(pts.size());
  Vec med(m);
  std::vector<double> col(n);
  for (int qi = 0; qi < m; ++qi) {
    for (int i = 0; i < n; ++i) col[i] = pts[i][qi];
    std::sort(col.begin(), col.end());
    med[qi] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }
  return med;
}

// Exact minimizer of A x^2 + B x + lambda * sum_j |x - t_j| over x.
double scalar_fused_min(double A, double B, double lambda, std::vector<double> t) {
  std::sort(t.begin(), t.end());
  const int f = static_cast<int>(t.size());
  auto slope_left = [&](int s) {
    // derivative just left of interval index s uses sign sum 2s - f
    return lambda * (2.0 * s - f);
  };
  // intervals: (-inf,t0], [t0,t1], ..., [t_{f-1}, inf)
  for (int s = 0; s <= f; ++s) {
    double x = -(B + slope_left(s)) / (2.0 * A);
    double lob = s == 0 ? -std::numeric_limits<double>::infinity() : t[s - 1];
    double hib = s == f ? std::numeric_limits<double>::infinity() : t[s];
    if (x >= lob && x <= hib) return x;
  }
  // minimum at a kink: subgradient interval straddles zero there
  for (int s = 0; s < f; ++s) {
    double x = t[s];
    double base = 2.0 * A * x + B;
    double lo = base + lambda * (2.0 * s - f);        // just below the kink
    double hi = base + lambda * (2.0 * (s + 1) - f);  // just above
    if (lo <= 0.0 && hi >= 0.0) return x;
  }
  return t.empty() ? -B / (2.0 * A) : t[f / 2];  // unreachable for A > 0
}

struct Iterate {
  Vec nominal;
  std::vector<Vec> per_system;
};

double objective_of(const std::vector<SystemCache>& caches, const Iterate& it, double lambda,
                    int p) {
  double obj = 0.0;
  for (std::size_t i = 0; i < caches.size(); ++i) {
    obj += residual_sse(GramCache{caches[i].gram, caches[i].phity, caches[i].yty, 0},
                        it.per_system[i]);
    obj += lambda * norm_p(it.nominal - it.per_system[i], p);
  }
  return obj;
}

double kkt_of(const std::vector<SystemCache>& caches, const Vec& nominal,
              const std::vector<Vec>& per_system, double lambda, int p, double support_threshold) {
  double worst = 0.0;
  Vec grad_sum = Vec::Zero(nominal.size());
  for (std::size_t i = 0; i < caches.size(); ++i) {
    Vec g = block_gradient(caches[i], per_system[i]);
    grad_sum += g;
    Vec dvec = per_system[i] - nominal;
    if (p == 2) {
      double dn = dvec.norm();
      if (dn > support_threshold)
        worst = std::max(worst, (g + lambda * dvec / dn).lpNorm<Eigen::Infinity>());
      else
        worst = std::max(worst, g.norm() - lambda);
    } else {
      for (Eigen::Index qi = 0; qi < dvec.size(); ++qi) {
        if (std::abs(dvec[qi]) > support_threshold)
          worst = std::max(worst, std::abs(g[qi] + lambda * (dvec[qi] > 0 ? 1.0 : -1.0)));
        else
          worst = std::max(worst, std::abs(g[qi]) - lambda);
      }
    }
  }
  worst = std::max(worst, grad_sum.lpNorm<Eigen::Infinity>());
  return worst;
}

// Joint relocation of the nominal together with every block currently fused
// to it. For p=2 a damped Newton solve; for p=1 exact per-coordinate scans.
// Plain block-coordinate sweeps cannot move a fused group, so without this
// step the iteration can stop at a collapsed non-stationary point.
void fused_group_step_p2(const std::vector<SystemCache>& caches, Iterate& it, double lambda,
                         double grad_tol) {
  const int m = static_cast<int>(it.nominal.size());
  const int n = static_cast<int>(caches.size());
  std::vector<bool> fused(n);
  bool any = false;
  for (int i = 0; i < n; ++i) {
    fused[i] = (it.per_system[i] - it.nominal).norm() == 0.0;
    any = any || fused[i];
  }
  if (!any) return;

  auto psi = [&](const Vec& c) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      if (fused[i])
        v += c.dot(caches[i].gram * c) - 2.0 * c.dot(caches[i].phity) + caches[i].yty;
      else
        v += lambda * (c - it.per_system[i]).norm();
    }
    return v;
  };

  Vec c = it.nominal;
  double val = psi(c);
  for (int newton = 0; newton < 200; ++newton) {
    Vec grad = Vec::Zero(m);
    Mat hess = Mat::Zero(m, m);
    for (int i = 0; i < n; ++i) {
      if (fused[i]) {
        grad += 2.0 * (caches[i].gram * c - caches[i].phity);
        hess += 2.0 * caches[i].gram;
      } else {
        Vec v = c - it.per_system[i];
        double dist = v.norm();
        if (dist <= 1e-300) continue;
        grad += lambda * v / dist;
        hess += (lambda / dist) * (Mat::Identity(m, m) - (v * v.transpose()) / (dist * dist));
      }
    }
    if (grad.lpNorm<Eigen::Infinity>() <= grad_tol) break;
    hess.diagonal().array() += 1e-12 * (1.0 + hess.trace());
    Vec dir = hess.ldlt().solve(-grad);
    double step = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      Vec cand = c + step * dir;
      double cand_val = psi(cand);
      // slack of a few ulps so progress is not rejected at the rounding floor
      if (cand_val <= val + 1e-4 * step * grad.dot(dir) + 1e-14 * (1.0 + std::abs(val))) {
        c = std::move(cand);
        val = cand_val;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  it.nominal = c;
  for (int i = 0; i < n; ++i)
    if (fused[i]) it.per_system[i] = c;
}

void fused_group_step_p1(const std::vector<SystemCache>& caches, Iterate& it, double lambda,
                         double grad_tol) {
  const int m = static_cast<int>(it.nominal.size());
  const int n = static_cast<int>(caches.size());
  // fusion is per coordinate under the 1-norm penalty
  std::vector<std::vector<bool>> fused(n, std::vector<bool>(m));
  bool any = false;
  for (int i = 0; i < n; ++i)
    for (int qi = 0; qi < m; ++qi) {
      fused[i][qi] = it.per_system[i][qi] == it.nominal[qi];
      any = any || fused[i][qi];
    }
  if (!any) return;

  Vec c = it.nominal;
  for (int sweep = 0; sweep < 400; ++sweep) {
    double moved = 0.0;
    for (int qi = 0; qi < m; ++qi) {
      double quad_a = 0.0, quad_b = 0.0;
      std::vector<double> anchors;
      for (int i = 0; i < n; ++i) {
        if (fused[i][qi]) {
          quad_a += caches[i].gram(qi, qi);
          double lin = -2.0 * caches[i].phity[qi];
          for (int r = 0; r < m; ++r) {
            if (r == qi) continue;
            double coord = fused[i][r] ? c[r] : it.per_system[i][r];
            lin += 2.0 * caches[i].gram(qi, r) * coord;
          }
          quad_b += lin;
        } else {
          anchors.push_back(it.per_system[i][qi]);
        }
      }
      if (quad_a <= 0.0) continue;
      double next = scalar_fused_min(quad_a, quad_b, lambda, std::move(anchors));
      moved = std::max(moved, std::abs(next - c[qi]));
      c[qi] = next;
    }
    if (moved <= 1e-3 * grad_tol * (1.0 + c.cwiseAbs().maxCoeff())) break;
  }
  for (int i = 0; i < n; ++i)
    for (int qi = 0; qi < m; ++qi)
      if (fused[i][qi]) it.per_system[i][qi] = c[qi];
  it.nominal = c;
}

// Joint Newton refinement over the nominal and every detached block, with the
// detachment pattern frozen (fused blocks ride along with the nominal). The
// per-sweep coordinate steps identify the pattern quickly but then converge
// only linearly; on the frozen pattern the objective is smooth, so a damped
// Newton solve (with the per-block rows eliminated by a Schur complement)
// finishes the job quadratically. Armijo backtracking keeps it monotone.
void newton_polish_p2(const std::vector<SystemCache>& caches, Iterate& it, double lambda,
                      double grad_tol) {
  const int m = static_cast<int>(it.nominal.size());
  const int n = static_cast<int>(caches.size());
  std::vector<int> active;
  for (int i = 0; i < n; ++i)
    if ((it.per_system[i] - it.nominal).norm() > 0.0) active.push_back(i);
  if (active.empty()) return;

  Vec c = it.nominal;
  std::vector<Vec> th(active.size());
  for (std::size_t a = 0; a < active.size(); ++a) th[a] = it.per_system[active[a]];
  std::vector<bool> is_active(n, false);
  for (int i : active) is_active[i] = true;

  auto fval = [&](const Vec& cc, const std::vector<Vec>& tt) {
    double v = 0.0;
    std::size_t a = 0;
    for (int i = 0; i < n; ++i) {
      if (is_active[i]) {
        const Vec& t = tt[a++];
        v += t.dot(caches[i].gram * t) - 2.0 * t.dot(caches[i].phity) + caches[i].yty;
        v += lambda * (cc - t).norm();
      } else {
        v += cc.dot(caches[i].gram * cc) - 2.0 * cc.dot(caches[i].phity) + caches[i].yty;
      }
    }
    return v;
  };

  double val = fval(c, th);
  for (int newton = 0; newton < 100; ++newton) {
    // collapse guard: a vanishing distance means the pattern was wrong
    bool collapsed = false;
    for (std::size_t a = 0; a < th.size(); ++a)
      if ((c - th[a]).norm() <= 1e-13 * (1.0 + c.norm())) {
        th[a] = c;
        collapsed = true;
      }
    if (collapsed) break;

    Vec g_c = Vec::Zero(m);
    Mat h_cc = Mat::Zero(m, m);
    for (int i = 0; i < n; ++i)
      if (!is_active[i]) {
        g_c += 2.0 * (caches[i].gram * c - caches[i].phity);
        h_cc += 2.0 * caches[i].gram;
      }
    std::vector<Vec> g_th(th.size());
    std::vector<Mat> proj(th.size());
    double gmax = 0.0;
    for (std::size_t a = 0; a < th.size(); ++a) {
      int i = active[a];
      Vec d = c - th[a];
      double dist = d.norm();
      Vec dhat = d / dist;
      proj[a] = (lambda / dist) * (Mat::Identity(m, m) - dhat * dhat.transpose());
      g_c += lambda * dhat;
      h_cc += proj[a];
      g_th[a] = 2.0 * (caches[i].gram * th[a] - caches[i].phity) - lambda * dhat;
      gmax = std::max(gmax, g_th[a].lpNorm<Eigen::Infinity>());
    }
    gmax = std::max(gmax, g_c.lpNorm<Eigen::Infinity>());
    if (gmax <= grad_tol) break;

    // Schur elimination of the per-block rows
    Mat schur = h_cc;
    Vec rhs = -g_c;
    std::vector<Eigen::LDLT<Mat>> facs(th.size());
    for (std::size_t a = 0; a < th.size(); ++a) {
      int i = active[a];
      Mat block = 2.0 * caches[i].gram + proj[a];
      block.diagonal().array() += 1e-12 * (1.0 + block.trace());
      facs[a].compute(block);
      Mat minv_p = facs[a].solve(proj[a]);
      schur -= proj[a] * minv_p;
      rhs -= proj[a] * facs[a].solve(g_th[a]);
    }
    schur.diagonal().array() += 1e-12 * (1.0 + schur.trace());
    Vec dc = schur.ldlt().solve(rhs);
    std::vector<Vec> dth(th.size());
    double descent = g_c.dot(dc);
    for (std::size_t a = 0; a < th.size(); ++a) {
      dth[a] = facs[a].solve(proj[a] * dc - g_th[a]);
      descent += g_th[a].dot(dth[a]);
    }
    if (!(descent < 0.0)) break;

    double step = 1.0;
    bool accepted = false;
    std::vector<Vec> cand_th(th.size());
    for (int bt = 0; bt < 60; ++bt) {
      Vec cand_c = c + step * dc;
      for (std::size_t a = 0; a < th.size(); ++a) cand_th[a] = th[a] + step * dth[a];
      double cand_val = fval(cand_c, cand_th);
      if (cand_val <= val + 1e-4 * step * descent + 1e-14 * (1.0 + std::abs(val))) {
        c = std::move(cand_c);
        th.swap(cand_th);
        cand_th.resize(th.size());
        val = cand_val;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }

  it.nominal = c;
  std::size_t a = 0;
  for (int i = 0; i < n; ++i) it.per_system[i] = is_active[i] ? th[a++] : c;
}

// At a pattern boundary the sweeps can hold a block marginally detached while
// the optimum has it fused; the smooth polish cannot cross that kink (its
// Newton steps collapse into vanishing backtracked moves). Trial-fuse the
// most marginal blocks outright, re-solve on the smaller pattern, and keep
// the result only if the true objective strictly decreases.
void fuse_repair_p2(const std::vector<SystemCache>& caches, Iterate& it, double lambda,
                    double grad_tol) {
  const int n = static_cast<int>(caches.size());
  for (int attempt = 0; attempt < n; ++attempt) {
    double obj = objective_of(caches, it, lambda, 2);
    std::vector<std::pair<double, int>> marginal;
    for (int i = 0; i < n; ++i) {
      double dev = (it.per_system[i] - it.nominal).norm();
      if (dev > 0.0) marginal.emplace_back(dev, i);
    }
    std::sort(marginal.begin(), marginal.end());
    if (marginal.size() > 5) marginal.resize(5);

    bool improved = false;
    for (const auto& [dev, i] : marginal) {
      Iterate trial = it;
      trial.per_system[i] = trial.nominal;
      fused_group_step_p2(caches, trial, lambda, grad_tol);
      newton_polish_p2(caches, trial, lambda, grad_tol);
      if (objective_of(caches, trial, lambda, 2) < obj - 1e-12 * (1.0 + std::abs(obj))) {
        it = std::move(trial);
        improved = true;
        break;
      }
    }
    if (!improved) return;
  }
}

// p = 1 analogue: with the per-coordinate fusion pattern and deviation signs
// frozen, the problem is an unconstrained quadratic, so the stationary point
// comes from one linear solve (assembled by affine probing of the reduced
// gradient in the nominal). Accepted only if the true objective decreases.
void pattern_solve_p1(const std::vector<SystemCache>& caches, Iterate& it, double lambda) {
  const int m = static_cast<int>(it.nominal.size());
  const int n = static_cast<int>(caches.size());
  std::vector<std::vector<bool>> fused(n, std::vector<bool>(m));
  std::vector<std::vector<double>> sign(n, std::vector<double>(m, 0.0));
  for (int i = 0; i < n; ++i)
    for (int qi = 0; qi < m; ++qi) {
      double d = it.per_system[i][qi] - it.nominal[qi];
      fused[i][qi] = d == 0.0;
      sign[i][qi] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    }

  // theta_i as an affine function of the nominal: free coordinates solve
  //   (G_i theta)_q = b_q - (lambda/2) s_q  with fused coordinates pinned.
  auto theta_of = [&](int i, const Vec& c) {
    std::vector<int> free_ix;
    for (int qi = 0; qi < m; ++qi)
      if (!fused[i][qi]) free_ix.push_back(qi);
    Vec theta = c;
    if (free_ix.empty()) return theta;
    const int f = static_cast<int>(free_ix.size());
    Mat gaa(f, f);
    Vec rhs(f);
    for (int r = 0; r < f; ++r) {
      int qr = free_ix[r];
      rhs[r] = caches[i].phity[qr] - 0.5 * lambda * sign[i][qr];
      for (int s = 0; s < f; ++s) gaa(r, s) = caches[i].gram(qr, free_ix[s]);
      for (int qi = 0; qi < m; ++qi)
        if (fused[i][qi]) rhs[r] -= caches[i].gram(qr, qi) * c[qi];
    }
    Vec xa = gaa.ldlt().solve(rhs);
    for (int r = 0; r < f; ++r) theta[free_ix[r]] = xa[r];
    return theta;
  };
  auto grad_c = [&](const Vec& c) {
    Vec g = Vec::Zero(m);
    for (int i = 0; i < n; ++i) {
      Vec theta = theta_of(i, c);
      Vec gi = 2.0 * (caches[i].gram * theta - caches[i].phity);
      for (int qi = 0; qi < m; ++qi) g[qi] += fused[i][qi] ? gi[qi] : -lambda * sign[i][qi];
    }
    return g;
  };

  // Active-set loop: solve on the assumed pattern, then fuse any free
  // coordinate whose computed deviation contradicts its assumed sign. The
  // fused set only grows, so this terminates; releases happen in the next
  // sweep's per-block steps.
  Iterate cand;
  cand.per_system.resize(n);
  for (int round = 0; round < n * m + 1; ++round) {
    Vec v = grad_c(Vec::Zero(m));
    Mat mat(m, m);
    for (int qi = 0; qi < m; ++qi) mat.col(qi) = grad_c(Vec::Unit(m, qi)) - v;
    Vec c_star = mat.ldlt().solve(-v);
    for (int i = 0; i < n; ++i) cand.per_system[i] = theta_of(i, c_star);

    bool consistent = true;
    for (int i = 0; i < n; ++i)
      for (int qi = 0; qi < m; ++qi) {
        if (fused[i][qi]) continue;
        double d = cand.per_system[i][qi] - c_star[qi];
        if (d * sign[i][qi] <= 0.0) {
          fused[i][qi] = true;
          sign[i][qi] = 0.0;
          consistent = false;
        }
      }
    cand.nominal = std::move(c_star);
    if (consistent) break;
  }

  double cur = objective_of(caches, it, lambda, 1);
  double next = objective_of(caches, cand, lambda, 1);
  if (next <= cur + 1e-12 * (1.0 + std::abs(cur))) it = std::move(cand);
}

}  // namespace

double compute_lambda_max(const FleetDataset& fleet, int p, bool ridge_fallback) {
  fleet.validate();
  check_p(p);
  auto caches = build_caches(fleet);
  Mat gram = caches[0].gram;
  Vec rhs = caches[0].phity;
  for (std::size_t i = 1; i < caches.size(); ++i) {
    gram += caches[i].gram;
    rhs += caches[i].phity;
  }
  Vec pooled = solve_normal_equations(gram, rhs, ridge_fallback);
  double lmax = 0.0;
  for (const auto& c : caches)
    lmax = std::max(lmax, dual_norm(block_gradient(c, pooled), p));
  return lmax;
}

std::vector<int> anomaly_support(const Solution& sol, double support_tolerance) {
  std::vector<int> out;
  for (std::size_t i = 0; i < sol.deviations.size(); ++i)
    if (sol.deviations[i] > support_tolerance) out.push_back(static_cast<int>(i) + 1);
  return out;
}

double kkt_residual(const FleetDataset& fleet, const Solution& sol, const SolverConfig& cfg) {
  fleet.validate();
  cfg.validate();
  if (static_cast<int>(sol.per_system.size()) != fleet.size() || sol.nominal.size() != fleet.dim())
    throw std::invalid_argument("kkt_residual: solution does not match fleet");
  auto caches = build_caches(fleet);
  return kkt_of(caches, sol.nominal, sol.per_system, cfg.lambda, cfg.p, sol.support_threshold);
}

Solution solve_group_lasso(const FleetDataset& fleet, const SolverConfig& cfg,
                           const std::optional<WarmStart>& warm) {
  fleet.validate();
  cfg.validate();
  const int n = fleet.size();
  auto caches = build_caches(fleet);

  SolveDiagnostics diag;
  diag.method = "central";

  // lambda = 0 decouples; the nominal is fixed to the mean of the block fits.
  if (cfg.lambda == 0.0) {
    Iterate it;
    it.per_system.resize(n);
    for (int i = 0; i < n; ++i)
      it.per_system[i] = solve_normal_equations(caches[i].gram, caches[i].phity, cfg.ridge_fallback);
    it.nominal = Vec::Zero(fleet.dim());
    for (const auto& v : it.per_system) it.nominal += v;
    it.nominal /= n;
    diag.converged = true;
    diag.iterations = 0;
    auto sol = make_solution(fleet, it.nominal, it.per_system, 0.0, cfg.p, cfg.support_tolerance,
                             diag);
    sol.diagnostics.kkt_residual =
        kkt_of(caches, sol.nominal, sol.per_system, 0.0, cfg.p, sol.support_threshold);
    return sol;
  }

  Iterate it;
  if (warm) {
    it.nominal = warm->nominal;
    it.per_system = warm->per_system;
    if (static_cast<int>(it.per_system.size()) != n)
      throw std::invalid_argument("warm start size mismatch");
  } else {
    Mat gram = caches[0].gram;
    Vec rhs = caches[0].phity;
    for (int i = 1; i < n; ++i) {
      gram += caches[i].gram;
      rhs += caches[i].phity;
    }
    it.nominal = solve_normal_equations(gram, rhs, cfg.ridge_fallback);
    it.per_system.assign(n, it.nominal);
  }

  const double kkt_tol = cfg.kkt_tolerance;
  const double inner_grad_tol = 0.05 * kkt_tol;
  double prev_obj = objective_of(caches, it, cfg.lambda, cfg.p);
  double last_kkt = std::numeric_limits<double>::infinity();

  for (int sweep = 1; sweep <= cfg.max_iterations; ++sweep) {
    // per-system block minimization, independent across i
    parallel_for(n, cfg.threads, [&](int i) {
      it.per_system[i] =
          block_step(caches[i], it.nominal, cfg.lambda, cfg.p, it.per_system[i]);
    });

    // nominal step: minimizer of the pure penalty given the blocks
    it.nominal = cfg.p == 2 ? geometric_median(it.per_system, it.nominal)
                            : coordinate_median(it.per_system);
    // snap blocks sitting on the nominal so the fused step sees them
    for (int i = 0; i < n; ++i) {
      if (cfg.p == 2) {
        if ((it.per_system[i] - it.nominal).norm() <=
            1e-12 * (1.0 + it.nominal.norm()))
          it.per_system[i] = it.nominal;
      } else {
        for (int qi = 0; qi < fleet.dim(); ++qi)
          if (std::abs(it.per_system[i][qi] - it.nominal[qi]) <=
              1e-12 * (1.0 + std::abs(it.nominal[qi])))
            it.per_system[i][qi] = it.nominal[qi];
      }
    }

    if (cfg.p == 2) {
      fused_group_step_p2(caches, it, cfg.lambda, inner_grad_tol);
      newton_polish_p2(caches, it, cfg.lambda, inner_grad_tol);
      double st = cfg.support_tolerance * (1.0 + norm_p(it.nominal, 2));
      if (kkt_of(caches, it.nominal, it.per_system, cfg.lambda, 2, st) > kkt_tol)
        fuse_repair_p2(caches, it, cfg.lambda, inner_grad_tol);
    } else {
      fused_group_step_p1(caches, it, cfg.lambda, inner_grad_tol);
      pattern_solve_p1(caches, it, cfg.lambda);
    }

    double obj = objective_of(caches, it, cfg.lambda, cfg.p);
    if (obj > prev_obj + 1e-7 * (1.0 + std::abs(prev_obj)))
      throw std::logic_error("objective increased during block-coordinate sweep");
    diag.objective_trace.push_back(obj);
    diag.iterations = sweep;

    double support_threshold = cfg.support_tolerance * (1.0 + norm_p(it.nominal, cfg.p));
    last_kkt = kkt_of(caches, it.nominal, it.per_system, cfg.lambda, cfg.p, support_threshold);
    double rel_decrease = (prev_obj - obj) / std::max(1.0, std::abs(prev_obj));
    prev_obj = obj;
    if (last_kkt <= kkt_tol && rel_decrease < cfg.objective_tolerance) {
      diag.converged = true;
      diag.kkt_residual = last_kkt;
      return make_solution(fleet, it.nominal, it.per_system, cfg.lambda, cfg.p,
                           cfg.support_tolerance, diag);
    }
  }
  throw NonConvergenceError("group lasso solve did not reach tolerance (kkt residual " +
                                std::to_string(last_kkt) + ")",
                            cfg.max_iterations, last_kkt);
}

}  // namespace fleet

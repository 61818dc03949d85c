#include "fleet/admm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fleet/errors.hpp"
#include "fleet/norms.hpp"
#include "fleet/parallel.hpp"

namespace fleet {

void AdmmConfig::validate() const {
  if (rho <= 0.0) throw std::invalid_argument("rho must be positive");
  if (mu <= 1.0) throw std::invalid_argument("mu must exceed 1");
  if (tau_incr <= 1.0 || tau_decr <= 1.0) throw std::invalid_argument("tau factors must exceed 1");
  if (eps_abs <= 0.0 || eps_rel <= 0.0 || inner_tolerance <= 0.0 || support_tolerance <= 0.0)
    throw std::invalid_argument("tolerances must be positive");
  if (max_iterations < 1 || inner_cap < 1) throw std::invalid_argument("iteration caps must be positive");
  if (over_relaxation < 1.0 || over_relaxation >= 2.0)
    throw std::invalid_argument("over_relaxation must lie in [1, 2)");
}

void AdmmNodeState::init(int tag_in, const SystemDataset& data) {
  tag = tag_in;
  auto c = GramCache::of(data);
  gram = std::move(c.gram);
  phity = std::move(c.phity);
  yty = c.yty;
  const int m = static_cast<int>(gram.rows());
  // warm start at the node-local least-squares estimate
  alpha = gram.ldlt().solve(phity);
  if (!alpha.allFinite()) alpha = Vec::Zero(m);
  beta = alpha;
  u = Vec::Zero(m);
  w = Vec::Zero(m);
  theta_i = alpha;
  theta = alpha;
  factor_rho = -1.0;
}

void AdmmNodeState::refactor(double rho) {
  if (rho == factor_rho) return;
  Mat q = 2.0 * gram;
  q.diagonal().array() += 2.0 * rho;
  quad_factor.compute(q);
  factor_rho = rho;
}

void local_primal_update(AdmmNodeState& node, double rho) {
  node.theta_i = node.alpha - node.u / rho;
}

Vec consensus_update(const std::vector<BroadcastFrame>& received, double rho, int n_nodes) {
  if (static_cast<int>(received.size()) != n_nodes)
    throw ProtocolError("consensus_update: expected " + std::to_string(n_nodes) +
                        " messages, got " + std::to_string(received.size()));
  std::vector<const BroadcastFrame*> by_tag(n_nodes, nullptr);
  for (const auto& f : received) {
    if (f.sender < 1 || f.sender > static_cast<std::uint32_t>(n_nodes))
      throw ProtocolError("consensus_update: sender tag out of range");
    if (by_tag[f.sender - 1] != nullptr)
      throw ProtocolError("consensus_update: duplicate message from node " +
                          std::to_string(f.sender));
    by_tag[f.sender - 1] = &f;
  }
  // fixed tag order keeps the reduction schedule independent
  Vec sum = Vec::Zero(by_tag[0]->beta.size());
  for (int j = 0; j < n_nodes; ++j) sum += by_tag[j]->beta - by_tag[j]->w / rho;
  return sum / n_nodes;
}

std::pair<Vec, Vec> local_subproblem(AdmmNodeState& node, const Vec& theta_i_new,
                                     const Vec& theta_new, double lambda, int p, double rho,
                                     const AdmmConfig& cfg) {
  if (rho <= 0.0) throw std::invalid_argument("local_subproblem: rho must be positive");
  node.refactor(rho);

  if (lambda == 0.0) {
    // decoupled closed forms
    Mat q = 2.0 * node.gram;
    q.diagonal().array() += rho;
    Vec alpha = q.ldlt().solve(2.0 * node.phity + node.u + rho * theta_i_new);
    Vec beta = theta_new + node.w / rho;
    return {alpha, beta};
  }

  // alternate exact alpha-solve with the proximal step in delta = beta - alpha
  Vec alpha = node.alpha;
  Vec delta = node.beta - node.alpha;
  double change = 0.0;
  int it = 0;
  for (; it < cfg.inner_cap; ++it) {
    alpha = node.quad_factor.solve(2.0 * node.phity + node.u + node.w + rho * theta_i_new +
                                   rho * (theta_new - delta));
    Vec target = theta_new - alpha + node.w / rho;
    Vec delta_new = prox_norm(target, lambda / rho, p);
    change = (delta_new - delta).lpNorm<Eigen::Infinity>();
    delta = std::move(delta_new);
    if (change <= cfg.inner_tolerance * (1.0 + delta.lpNorm<Eigen::Infinity>())) break;
  }
  if (it >= cfg.inner_cap)
    throw NonConvergenceError("local subproblem exceeded inner cap", cfg.inner_cap, change);
  // final consistency solve for alpha at the settled delta
  alpha = node.quad_factor.solve(2.0 * node.phity + node.u + node.w + rho * theta_i_new +
                                 rho * (theta_new - delta));
  return {alpha, alpha + delta};
}

void dual_update(AdmmNodeState& node, const Vec& theta_i_new, const Vec& theta_new, double rho) {
  node.u += rho * (theta_i_new - node.alpha);
  node.w += rho * (theta_new - node.beta);
}

StoppingThresholds stopping_check(double primal_residual, double dual_residual, double ax_norm,
                                  double z_norm, double nu_norm, int n_nodes, int dim,
                                  double eps_abs, double eps_rel) {
  if (primal_residual < 0.0 || dual_residual < 0.0)
    throw std::invalid_argument("stopping_check: negative residual norm");
  StoppingThresholds t;
  t.eps_pri = std::sqrt(2.0 * n_nodes * dim) * eps_abs + eps_rel * std::max(ax_norm, z_norm);
  t.eps_dual = std::sqrt(static_cast<double>(n_nodes + 1) * dim) * eps_abs + eps_rel * nu_norm;
  t.stop = primal_residual <= t.eps_pri && dual_residual <= t.eps_dual;
  return t;
}

double rho_update(double rho, double primal_residual, double dual_residual, double eps_pri,
                  double eps_dual, const AdmmConfig& cfg) {
  if (rho <= 0.0) throw std::invalid_argument("rho_update: rho must be positive");
  if (eps_pri <= 0.0 || eps_dual <= 0.0)
    throw std::invalid_argument("rho_update: thresholds must be positive");
  if (!cfg.adaptive_rho) return rho;
  const double pr = primal_residual / eps_pri;
  const double du = dual_residual / eps_dual;
  if (pr > cfg.mu * du) return rho * cfg.tau_incr;
  if (du > cfg.mu * pr) return rho / cfg.tau_decr;
  return rho;
}

Solution run_distributed(const FleetDataset& fleet, double lambda, int p, const AdmmConfig& cfg,
                         Transport& transport, std::vector<AdmmTraceRow>* trace) {
  fleet.validate();
  cfg.validate();
  check_p(p);
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");

  const int n = fleet.size();
  const int m = fleet.dim();
  std::vector<AdmmNodeState> nodes(n);
  for (int i = 0; i < n; ++i) nodes[i].init(i + 1, fleet.systems[i]);
  transport.open(n);

  double rho = cfg.rho;
  SolveDiagnostics diag;
  diag.method = "admm";
  double primal = 0.0, dual = 0.0;

  for (int k = 0; k < cfg.max_iterations; ++k) {
    std::vector<Vec> alpha_prev(n), beta_prev(n);

    // step 2 + step 3: local primal update, then broadcast (beta, w)
    parallel_for(n, cfg.threads, [&](int i) {
      auto& nd = nodes[i];
      local_primal_update(nd, rho);
      BroadcastFrame f;
      f.iteration = static_cast<std::uint32_t>(k);
      f.sender = static_cast<std::uint32_t>(nd.tag);
      f.beta = nd.beta;
      f.w = nd.w;
      transport.broadcast(f);
    });

    // step 4: every node folds the received broadcasts plus its own pair
    parallel_for(n, cfg.threads, [&](int i) {
      auto& nd = nodes[i];
      auto msgs = transport.collect(static_cast<std::uint32_t>(k), nd.tag, n - 1);
      BroadcastFrame own;
      own.iteration = static_cast<std::uint32_t>(k);
      own.sender = static_cast<std::uint32_t>(nd.tag);
      own.beta = nd.beta;
      own.w = nd.w;
      msgs.push_back(std::move(own));
      nd.theta = consensus_update(msgs, rho, n);
    });

    // steps 5-7: local subproblem and dual update, with the usual
    // over-relaxation blend of the fresh primal iterate and the old copy
    parallel_for(n, cfg.threads, [&](int i) {
      auto& nd = nodes[i];
      alpha_prev[i] = nd.alpha;
      beta_prev[i] = nd.beta;
      const double a_r = cfg.over_relaxation;
      const Vec theta_i_hat = a_r * nd.theta_i + (1.0 - a_r) * nd.alpha;
      const Vec theta_hat = a_r * nd.theta + (1.0 - a_r) * nd.beta;
      auto [a, b] = local_subproblem(nd, theta_i_hat, theta_hat, lambda, p, rho, cfg);
      nd.alpha = std::move(a);
      nd.beta = std::move(b);
      dual_update(nd, theta_i_hat, theta_hat, rho);
    });

    // residuals of Ax - z and rho A^T (z_new - z_old), in tag order
    double pr2 = 0.0, ax2 = 0.0, z2 = 0.0, nu2 = 0.0;
    Vec beta_shift_sum = Vec::Zero(m);
    double dual_alpha2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& nd = nodes[i];
      pr2 += (nd.theta_i - nd.alpha).squaredNorm() + (nd.theta - nd.beta).squaredNorm();
      ax2 += nd.theta_i.squaredNorm() + nd.theta.squaredNorm();
      z2 += nd.alpha.squaredNorm() + nd.beta.squaredNorm();
      dual_alpha2 += (nd.alpha - alpha_prev[i]).squaredNorm();
      beta_shift_sum += nd.beta - beta_prev[i];
      nu2 += nd.u.squaredNorm() + nd.w.squaredNorm();
    }
    primal = std::sqrt(pr2);
    dual = rho * std::sqrt(dual_alpha2 + beta_shift_sum.squaredNorm());

    diag.iterations = k + 1;
    diag.primal_residuals.push_back(primal);
    diag.dual_residuals.push_back(dual);
    diag.rho_trace.push_back(rho);
    double obj = 0.0;
    {
      std::vector<Vec> per(n);
      for (int i = 0; i < n; ++i) per[i] = nodes[i].alpha;
      obj = group_objective(fleet, nodes[0].theta, per, lambda, p);
    }
    diag.objective_trace.push_back(obj);
    if (trace) {
      AdmmTraceRow row{k + 1, primal, dual, rho, obj, {}};
      const double tol =
          cfg.support_tolerance * (1.0 + norm_p(nodes[0].theta, p));
      for (int i = 0; i < n; ++i)
        if (norm_p(nodes[i].alpha - nodes[0].theta, p) > tol) row.support.push_back(i + 1);
      trace->push_back(std::move(row));
    }

    auto st = stopping_check(primal, dual, std::sqrt(ax2), std::sqrt(z2), std::sqrt(nu2), n, m,
                             cfg.eps_abs, cfg.eps_rel);
    if (st.stop) {
      diag.converged = true;
      break;
    }
    rho = rho_update(rho, primal, dual, st.eps_pri, st.eps_dual, cfg);
  }

  if (!diag.converged) {
    transport.close();
    throw NonConvergenceError("distributed solve hit the iteration cap (primal residual " +
                                  std::to_string(primal) + ")",
                              diag.iterations, primal);
  }
  transport.close();

  std::vector<Vec> per(n);
  for (int i = 0; i < n; ++i) per[i] = nodes[i].alpha;
  return make_solution(fleet, nodes[0].theta, per, lambda, p, cfg.support_tolerance,
                       std::move(diag));
}

}  // namespace fleet

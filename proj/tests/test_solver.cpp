#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fleet/core.hpp"
#include "fleet/datagen.hpp"
#include "fleet/errors.hpp"
#include "fleet/norms.hpp"
#include "fleet/solver.hpp"

using namespace fleet;

namespace {

FleetDataset make_fleet(int n, int m, int omega, std::uint64_t seed, std::vector<int> anomalies = {},
                        double separation = 4.0, double noise = 0.4) {
  GenConfig c;
  c.n_systems = n;
  c.observations = omega;
  c.dim = m;
  c.noise_variance = noise;
  c.nominal_mean = Vec::Ones(m);
  c.nominal_cov = 0.02 * Mat::Identity(m, m);
  c.anomal_mean = (1.0 + separation) * Vec::Ones(m);
  c.anomal_cov = 0.02 * Mat::Identity(m, m);
  c.regressor_mean = Vec::Zero(m);
  c.regressor_cov = Mat::Identity(m, m);
  c.anomaly_indices = std::move(anomalies);
  c.seed = seed;
  return generate_fleet(c);
}

}  // namespace

TEST_CASE("lambda = 0 decouples into per-system least squares") {
  auto fleet = make_fleet(5, 3, 20, 1, {2});
  for (int p : {1, 2}) {
    SolverConfig cfg;
    cfg.lambda = 0.0;
    cfg.p = p;
    auto sol = solve_group_lasso(fleet, cfg);
    Vec mean = Vec::Zero(3);
    for (int i = 0; i < 5; ++i) {
      Vec own = least_squares(fleet.systems[i]);
      CHECK((sol.per_system[i] - own).lpNorm<Eigen::Infinity>() < 1e-8);
      mean += sol.per_system[i];
    }
    mean /= 5.0;
    CHECK((sol.nominal - mean).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(sol.flagged.size() == 5);  // generic data: everything detaches
    CHECK(sol.diagnostics.kkt_residual <= cfg.kkt_tolerance);
  }
}

TEST_CASE("lambda >= lambda_max forces the pooled solution") {
  auto fleet = make_fleet(6, 2, 18, 2, {4});
  Vec pooled = least_squares(fleet.systems);
  for (int p : {1, 2}) {
    double lmax = compute_lambda_max(fleet, p);
    CHECK(lmax > 0.0);
    SolverConfig cfg;
    cfg.lambda = 1.5 * lmax;
    cfg.p = p;
    auto sol = solve_group_lasso(fleet, cfg);
    CHECK(sol.flagged.empty());
    CHECK((sol.nominal - pooled).lpNorm<Eigen::Infinity>() < 1e-7);
    for (const auto& t : sol.per_system)
      CHECK((t - sol.nominal).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("two-system scalar hand case: lambda_max = 2") {
  FleetDataset fleet;
  SystemDataset a, b;
  a.regressors = Mat::Ones(1, 1);
  a.measurements = Vec::Constant(1, 1.0);
  b.regressors = Mat::Ones(1, 1);
  b.measurements = Vec::Constant(1, -1.0);
  fleet.systems = {a, b};
  CHECK(compute_lambda_max(fleet, 2) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(compute_lambda_max(fleet, 1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("noise-free identical systems give lambda_max ~ 0") {
  GenConfig c;
  c.n_systems = 4;
  c.observations = 10;
  c.dim = 2;
  c.noise_variance = 0.0;
  c.nominal_mean = Vec::Ones(2);
  c.nominal_cov = Mat::Zero(2, 2);
  c.anomal_mean = Vec::Ones(2);
  c.anomal_cov = Mat::Zero(2, 2);
  c.regressor_mean = Vec::Zero(2);
  c.regressor_cov = Mat::Identity(2, 2);
  c.seed = 3;
  auto fleet = generate_fleet(c);
  CHECK(compute_lambda_max(fleet, 2) < 1e-8);
}

TEST_CASE("boundary probes around lambda_max") {
  for (std::uint64_t seed : {10, 11, 12}) {
    auto fleet = make_fleet(5, 2, 25, seed, {3});
    for (int p : {1, 2}) {
      double lmax = compute_lambda_max(fleet, p);
      SolverConfig cfg;
      cfg.p = p;
      cfg.lambda = 1.01 * lmax;
      CHECK(solve_group_lasso(fleet, cfg).flagged.empty());
      cfg.lambda = 0.99 * lmax;
      CHECK_FALSE(solve_group_lasso(fleet, cfg).flagged.empty());
    }
  }
}

TEST_CASE("kkt_residual at per-system least squares with lambda = 0") {
  auto fleet = make_fleet(4, 2, 15, 20);
  std::vector<Vec> per;
  Vec mean = Vec::Zero(2);
  for (const auto& s : fleet.systems) {
    per.push_back(least_squares(s));
    mean += per.back();
  }
  mean /= 4.0;
  auto sol = make_solution(fleet, mean, per, 0.0, 2, 1e-6, {});
  SolverConfig cfg;
  cfg.lambda = 0.0;
  CHECK(kkt_residual(fleet, sol, cfg) <= 1e-8);
}

TEST_CASE("kkt_residual detects a perturbed flagged block") {
  auto fleet = make_fleet(5, 2, 20, 21, {2}, 8.0, 0.1);
  SolverConfig cfg;
  cfg.lambda = 0.5 * compute_lambda_max(fleet, 2);
  auto sol = solve_group_lasso(fleet, cfg);
  REQUIRE_FALSE(sol.flagged.empty());
  double clean = kkt_residual(fleet, sol, cfg);
  CHECK(clean <= cfg.kkt_tolerance);
  int idx = sol.flagged.front() - 1;
  sol.per_system[idx][0] += 0.1;
  CHECK(kkt_residual(fleet, sol, cfg) > 1e-2);
}

TEST_CASE("converged solutions certify their own optimality") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  for (int rep = 0; rep < 6; ++rep) {
    auto fleet = make_fleet(4 + rep % 3, 2 + rep % 2, 20, 40 + rep, {1});
    int p = rep % 2 ? 1 : 2;
    SolverConfig cfg;
    cfg.p = p;
    cfg.lambda = unif(gen) * compute_lambda_max(fleet, p);
    auto sol = solve_group_lasso(fleet, cfg);
    CHECK(sol.diagnostics.converged);
    CHECK(sol.diagnostics.kkt_residual <= cfg.kkt_tolerance);
    CHECK(kkt_residual(fleet, sol, cfg) == doctest::Approx(sol.diagnostics.kkt_residual));
    // objective field matches an independent recompute
    CHECK(sol.objective ==
          doctest::Approx(group_objective(fleet, sol.nominal, sol.per_system, cfg.lambda, p))
              .epsilon(1e-12));
  }
}

TEST_CASE("objective trace is monotone nonincreasing") {
  auto fleet = make_fleet(6, 3, 25, 50, {5});
  SolverConfig cfg;
  cfg.lambda = 0.3 * compute_lambda_max(fleet, 2);
  auto sol = solve_group_lasso(fleet, cfg);
  const auto& trace = sol.diagnostics.objective_trace;
  REQUIRE_FALSE(trace.empty());
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] <= trace[i - 1] + 1e-10 * (1.0 + std::abs(trace[i - 1])));
}

TEST_CASE("solution beats random probe points") {
  auto fleet = make_fleet(3, 2, 12, 60, {});
  std::mt19937_64 gen(61);
  std::normal_distribution<double> nd;
  for (int p : {1, 2}) {
    SolverConfig cfg;
    cfg.p = p;
    cfg.lambda = 0.4 * compute_lambda_max(fleet, p);
    auto sol = solve_group_lasso(fleet, cfg);
    for (int probe = 0; probe < 1000; ++probe) {
      double scale = probe % 2 ? 1e-3 : 0.3;
      Vec nm = sol.nominal + scale * Vec::NullaryExpr(2, [&] { return nd(gen); });
      std::vector<Vec> per = sol.per_system;
      for (auto& t : per) t += scale * Vec::NullaryExpr(2, [&] { return nd(gen); });
      CHECK(sol.objective <=
            group_objective(fleet, nm, per, cfg.lambda, p) + 1e-9 * (1.0 + sol.objective));
    }
  }
}

TEST_CASE("anomaly_support thresholding") {
  FleetDataset fleet = make_fleet(4, 1, 5, 70);
  Solution sol;
  sol.p = 2;
  sol.nominal = Vec::Zero(1);
  sol.per_system = {Vec::Zero(1), Vec::Constant(1, 5.2), Vec::Zero(1), Vec::Constant(1, 1e-12)};
  sol.deviations = {0.0, 5.2, 0.0, 1e-12};
  CHECK(anomaly_support(sol, 1e-8) == std::vector<int>{2});
  CHECK(anomaly_support(sol, 10.0).empty());
  CHECK(anomaly_support(sol, 0.0) == std::vector<int>{2, 4});
}

TEST_CASE("non-convergence raises with diagnostics") {
  auto fleet = make_fleet(8, 3, 30, 80, {2, 5});
  SolverConfig cfg;
  cfg.lambda = 0.2 * compute_lambda_max(fleet, 2);
  cfg.max_iterations = 1;
  cfg.kkt_tolerance = 1e-14;  // unreachable in one sweep
  CHECK_THROWS_AS(solve_group_lasso(fleet, cfg), NonConvergenceError);
}

TEST_CASE("config validation") {
  SolverConfig cfg;
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SolverConfig{};
  cfg.p = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SolverConfig{};
  cfg.kkt_tolerance = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("warm start does not change the answer") {
  auto fleet = make_fleet(5, 2, 20, 90, {3});
  SolverConfig cfg;
  cfg.lambda = 0.5 * compute_lambda_max(fleet, 2);
  auto cold = solve_group_lasso(fleet, cfg);
  WarmStart warm;
  warm.nominal = cold.nominal;
  warm.per_system = cold.per_system;
  auto hot = solve_group_lasso(fleet, cfg, warm);
  CHECK((hot.nominal - cold.nominal).lpNorm<Eigen::Infinity>() < 1e-7);
  CHECK(hot.flagged == cold.flagged);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fleet/core.hpp"
#include "fleet/errors.hpp"
#include "fleet/norms.hpp"

using namespace fleet;

namespace {

SystemDataset random_system(std::mt19937_64& gen, int omega, int m) {
  std::normal_distribution<double> nd;
  SystemDataset d;
  d.regressors = Mat::NullaryExpr(omega, m, [&] { return nd(gen); });
  d.measurements = Vec::NullaryExpr(omega, [&] { return nd(gen); });
  return d;
}

// Explicit 3x3 inverse through the adjugate, independent of any factorization.
Mat inverse3_cofactor(const Mat& a) {
  REQUIRE(a.rows() == 3);
  Mat adj(3, 3);
  adj(0, 0) = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
  adj(0, 1) = -(a(0, 1) * a(2, 2) - a(0, 2) * a(2, 1));
  adj(0, 2) = a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1);
  adj(1, 0) = -(a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0));
  adj(1, 1) = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
  adj(1, 2) = -(a(0, 0) * a(1, 2) - a(0, 2) * a(1, 0));
  adj(2, 0) = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
  adj(2, 1) = -(a(0, 0) * a(2, 1) - a(0, 1) * a(2, 0));
  adj(2, 2) = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  double det = a(0, 0) * adj(0, 0) + a(0, 1) * adj(1, 0) + a(0, 2) * adj(2, 0);
  return adj / det;
}

}  // namespace

TEST_CASE("binomial_count small values") {
  CHECK(binomial_count(200, 3) == 1313400ULL);
  CHECK(binomial_count(5, 0) == 1ULL);
  CHECK(binomial_count(4, 2) == 6ULL);
  CHECK(binomial_count(0, 0) == 1ULL);
  CHECK(binomial_count(7, 7) == 1ULL);
}

TEST_CASE("binomial_count satisfies Pascal's rule exhaustively") {
  for (int n = 2; n <= 30; ++n)
    for (int k = 1; k < n; ++k)
      CHECK(binomial_count(n, k) == binomial_count(n - 1, k - 1) + binomial_count(n - 1, k));
}

TEST_CASE("binomial_count domain and overflow errors") {
  CHECK_THROWS_AS(binomial_count(3, 5), std::invalid_argument);
  CHECK_THROWS_AS(binomial_count(-1, 0), std::invalid_argument);
  CHECK_THROWS_AS(binomial_count(3, -1), std::invalid_argument);
  CHECK_THROWS_AS(binomial_count(200, 100), std::overflow_error);
}

TEST_CASE("least_squares recovers the generator on noise-free data") {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> nd;
  Vec theta0(3);
  theta0 << 1.5, -0.25, 4.0;
  SystemDataset d;
  d.regressors = Mat::NullaryExpr(25, 3, [&] { return nd(gen); });
  d.measurements = d.regressors * theta0;
  Vec est = least_squares(d);
  CHECK((est - theta0).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("least_squares m=1 is the observation mean") {
  SystemDataset d;
  d.regressors = Mat::Ones(2, 1);
  d.measurements = Vec(2);
  d.measurements << 1.0, 3.0;
  Vec est = least_squares(d);
  CHECK(est[0] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("least_squares matches the explicit cofactor-inverse normal equations") {
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 10; ++rep) {
    auto d = random_system(gen, 20, 3);
    Mat g = d.regressors.transpose() * d.regressors;
    Vec b = d.regressors.transpose() * d.measurements;
    Vec oracle = inverse3_cofactor(g) * b;
    Vec est = least_squares(d);
    CHECK((est - oracle).lpNorm<Eigen::Infinity>() < 1e-8 * (1.0 + oracle.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("least_squares zeroes the gradient") {
  std::mt19937_64 gen(13);
  for (int rep = 0; rep < 20; ++rep) {
    auto d = random_system(gen, 30, 4);
    Vec est = least_squares(d);
    Vec grad = 2.0 * d.regressors.transpose() * (d.regressors * est - d.measurements);
    double scale = 1.0 + (d.regressors.transpose() * d.measurements).lpNorm<Eigen::Infinity>();
    CHECK(grad.lpNorm<Eigen::Infinity>() <= 1e-8 * scale);
  }
}

TEST_CASE("least_squares is optimal against random perturbations") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> nd;
  auto d = random_system(gen, 40, 3);
  Vec est = least_squares(d);
  double best = residual_sse(d, est);
  for (int rep = 0; rep < 100; ++rep) {
    Vec probe = est + 0.5 * Vec::NullaryExpr(3, [&] { return nd(gen); });
    CHECK(best <= residual_sse(d, probe) + 1e-12);
  }
}

TEST_CASE("pooled least_squares equals the stacked solve") {
  std::mt19937_64 gen(19);
  std::vector<SystemDataset> ds;
  for (int i = 0; i < 3; ++i) ds.push_back(random_system(gen, 12, 2));
  Vec pooled = least_squares(ds);
  Mat big(36, 2);
  Vec y(36);
  for (int i = 0; i < 3; ++i) {
    big.middleRows(12 * i, 12) = ds[i].regressors;
    y.segment(12 * i, 12) = ds[i].measurements;
  }
  SystemDataset stacked{big, y};
  Vec direct = least_squares(stacked);
  CHECK((pooled - direct).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("residual_sse basics and naive-loop oracle") {
  SystemDataset single;
  single.regressors = Mat::Ones(1, 1);
  single.measurements = Vec::Constant(1, 2.0);
  CHECK(residual_sse(single, Vec::Zero(1)) == doctest::Approx(4.0));

  std::mt19937_64 gen(23);
  std::normal_distribution<double> nd;
  auto d = random_system(gen, 15, 3);
  Vec theta = Vec::NullaryExpr(3, [&] { return nd(gen); });
  double naive = 0.0;
  for (int t = 0; t < 15; ++t) {
    double pred = 0.0;
    for (int q = 0; q < 3; ++q) pred += d.regressors(t, q) * theta[q];
    double r = d.measurements[t] - pred;
    naive += r * r;
  }
  CHECK(residual_sse(d, theta) == doctest::Approx(naive).epsilon(1e-12));
  CHECK(residual_sse(GramCache::of(d), theta) == doctest::Approx(naive).epsilon(1e-10));
}

TEST_CASE("residual_sse is zero only at interpolation") {
  std::mt19937_64 gen(29);
  auto d = random_system(gen, 10, 2);
  Vec theta0(2);
  theta0 << 2.0, -1.0;
  d.measurements = d.regressors * theta0;
  CHECK(residual_sse(d, theta0) == doctest::Approx(0.0));
  CHECK(residual_sse(d, Vec::Zero(2)) > 0.0);
}

TEST_CASE("solve_normal_equations on singular systems") {
  Mat g = Mat::Zero(2, 2);
  g(0, 0) = 1.0;  // rank 1
  Vec b(2);
  b << 1.0, 0.0;
  try {
    solve_normal_equations(g, b);
    FAIL("expected SingularityError");
  } catch (const SingularityError& e) {
    CHECK(e.rank == 1);
    CHECK(e.required == 2);
  }
  // The ridge fallback produces a finite answer close to the minimum-norm one.
  Vec v = solve_normal_equations(g, b, true);
  CHECK(v.allFinite());
  CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gram_rank") {
  CHECK(gram_rank(Mat::Identity(3, 3)) == 3);
  Mat g = Mat::Zero(3, 3);
  g(0, 0) = 1.0;
  g(1, 1) = 1.0;
  CHECK(gram_rank(g) == 2);
}

TEST_CASE("informativity_check flags an isolated regressor column") {
  // Only system 1 excites parameter element 2; a deviation there is invisible.
  FleetDataset fleet;
  std::mt19937_64 gen(31);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 3; ++i) {
    SystemDataset d;
    d.regressors = Mat::NullaryExpr(10, 3, [&] { return nd(gen); });
    if (i != 0) d.regressors.col(1).setZero();
    d.measurements = Vec::NullaryExpr(10, [&] { return nd(gen); });
    fleet.systems.push_back(std::move(d));
  }
  auto rep = informativity_check(fleet);
  CHECK(rep.undetectable[0][1]);
  CHECK_FALSE(rep.undetectable[0][0]);
  CHECK(rep.undetectable[1][1]);  // dead column on system 2 itself: also invisible
}

TEST_CASE("informativity_check on dense generic fleets") {
  FleetDataset fleet;
  std::mt19937_64 gen(37);
  for (int i = 0; i < 4; ++i) fleet.systems.push_back(random_system(gen, 12, 3));
  auto rep = informativity_check(fleet);
  CHECK(rep.pooled_rank == 3);
  for (const auto& row : rep.undetectable)
    for (bool u : row) CHECK_FALSE(u);
}

TEST_CASE("informativity_check reports reduced pooled rank for a dead column") {
  FleetDataset fleet;
  std::mt19937_64 gen(41);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 3; ++i) {
    SystemDataset d;
    d.regressors = Mat::NullaryExpr(8, 3, [&] { return nd(gen); });
    d.regressors.col(2).setZero();
    d.measurements = Vec::NullaryExpr(8, [&] { return nd(gen); });
    fleet.systems.push_back(std::move(d));
  }
  CHECK(informativity_check(fleet).pooled_rank == 2);
}

TEST_CASE("group_objective matches a naive evaluation") {
  std::mt19937_64 gen(43);
  std::normal_distribution<double> nd;
  FleetDataset fleet;
  for (int i = 0; i < 4; ++i) fleet.systems.push_back(random_system(gen, 9, 2));
  Vec nominal = Vec::NullaryExpr(2, [&] { return nd(gen); });
  std::vector<Vec> per;
  for (int i = 0; i < 4; ++i) per.push_back(Vec::NullaryExpr(2, [&] { return nd(gen); }));
  for (int p : {1, 2}) {
    double naive = 0.0;
    for (int i = 0; i < 4; ++i) {
      naive += residual_sse(fleet.systems[i], per[i]);
      naive += 3.25 * norm_p(nominal - per[i], p);
    }
    CHECK(group_objective(fleet, nominal, per, 3.25, p) == doctest::Approx(naive).epsilon(1e-12));
  }
}

TEST_CASE("make_solution maintains the deviation/flagged invariants bit-for-bit") {
  std::mt19937_64 gen(47);
  std::normal_distribution<double> nd;
  FleetDataset fleet;
  for (int i = 0; i < 5; ++i) fleet.systems.push_back(random_system(gen, 8, 2));
  Vec nominal = Vec::NullaryExpr(2, [&] { return nd(gen); });
  std::vector<Vec> per;
  for (int i = 0; i < 5; ++i) per.push_back(Vec::NullaryExpr(2, [&] { return nd(gen); }));
  per[2] = nominal;  // exact zero deviation
  auto sol = make_solution(fleet, nominal, per, 2.0, 2, 1e-6, {});
  REQUIRE(sol.deviations.size() == 5);
  for (int i = 0; i < 5; ++i) {
    double dev = (sol.per_system[i] - sol.nominal).norm();
    CHECK(sol.deviations[i] == dev);  // exact recompute
  }
  std::vector<int> expect;
  for (int i = 0; i < 5; ++i)
    if (sol.deviations[i] > sol.support_threshold) expect.push_back(i + 1);
  CHECK(sol.flagged == expect);
  CHECK(sol.objective ==
        doctest::Approx(group_objective(fleet, nominal, per, 2.0, 2)).epsilon(1e-12));
}

TEST_CASE("dataset validation rejects malformed input") {
  SystemDataset d;
  d.regressors = Mat::Ones(3, 2);
  d.measurements = Vec::Ones(2);
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d.measurements = Vec::Ones(3);
  CHECK_NOTHROW(d.validate());
  d.measurements[1] = std::nan("");
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);

  FleetDataset fleet;
  CHECK_THROWS_AS(fleet.validate(), std::invalid_argument);
}

TEST_CASE("hypothesis validation") {
  Hypothesis h;
  h.anomaly_set = {1, 3};
  CHECK_NOTHROW(h.validate(5));
  h.anomaly_set = {0};
  CHECK_THROWS_AS(h.validate(5), std::invalid_argument);
  h.anomaly_set = {2, 2};
  CHECK_THROWS_AS(h.validate(5), std::invalid_argument);
  h.anomaly_set = {6};
  CHECK_THROWS_AS(h.validate(5), std::invalid_argument);
}

TEST_CASE("norm helpers") {
  Vec v(2);
  v << 3.0, -4.0;
  CHECK(norm_p(v, 1) == doctest::Approx(7.0));
  CHECK(norm_p(v, 2) == doctest::Approx(5.0));
  CHECK(dual_norm(v, 1) == doctest::Approx(4.0));
  CHECK(dual_norm(v, 2) == doctest::Approx(5.0));
  CHECK_THROWS_AS(check_p(3), std::invalid_argument);

  // prox returns exact zeros inside the threshold ball
  Vec small(2);
  small << 0.1, -0.2;
  Vec z2 = prox_norm(small, 1.0, 2);
  CHECK(z2.norm() == 0.0);
  Vec z1 = prox_norm(small, 0.5, 1);
  CHECK(z1.lpNorm<1>() == 0.0);
  Vec big(2);
  big << 3.0, 4.0;
  CHECK((prox_norm(big, 1.0, 2) - 0.8 * big).norm() < 1e-14);
  Vec s1 = prox_norm(big, 1.0, 1);
  CHECK(s1[0] == doctest::Approx(2.0));
  CHECK(s1[1] == doctest::Approx(3.0));
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dfx/dml.hpp"
#include "dfx/rng.hpp"
#include "dfx/simulator.hpp"
#include "dfx/stats.hpp"

using namespace dfx;

namespace {
Matrix random_matrix(int n, int p, uint64_t seed) {
  Rng rng(seed);
  Matrix X(n, p);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < n; ++i) X(i, j) = rng.next_normal();
  }
  return X;
}
}  // namespace

TEST_CASE("hand-evaluated doubly robust scores") {
  // residual-free with equal means: everything cancels
  CHECK(dr_score(0.5, 1.0, 0.5, 0.5, 0.7) == doctest::Approx(0.0).epsilon(1e-12));
  // mu1-mu0 + (y-mu1)/p1 = 0.3 + 1.0
  CHECK(dr_score(1.0, 1.0, 0.2, 0.5, 0.5) == doctest::Approx(1.3).epsilon(1e-12));
  // control arm: 0 - (0 - 0.5)/0.5 = 1.0
  CHECK(dr_score(0.0, 0.0, 0.5, 0.5, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(dr_score(1.0, 1.0, 0.5, 0.5, 0.0), ValidationError);
  CHECK_THROWS_AS(dr_score(1.0, 1.0, 0.5, 0.5, 1.0), ValidationError);
}

TEST_CASE("trimming keeps the boundary and drops strictly outside") {
  Vector p(3);
  p << 0.005, 0.5, 0.995;
  const auto kept = trim(p, 0.01);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0] == 1);

  Vector q(4);
  q << 0.01, 0.99, 0.0099, 0.9901;
  const auto kept2 = trim(q, 0.01);
  REQUIRE(kept2.size() == 2);
  CHECK(kept2[0] == 0);
  CHECK(kept2[1] == 1);

  Vector bad(1);
  bad << 1.0;
  CHECK_THROWS_AS(trim(bad, 0.01), ValidationError);
  Vector all_out(2);
  all_out << 0.001, 0.999;
  CHECK_THROWS_AS(trim(all_out, 0.01), EstimationError);
}

TEST_CASE("a larger trimming threshold drops a superset") {
  Rng rng(5);
  Vector p(500);
  for (int i = 0; i < 500; ++i) p[i] = 0.001 + 0.998 * rng.next_double();
  const auto k1 = trim(p, 0.01);
  const auto k5 = trim(p, 0.05);
  const std::set<int> s1(k1.begin(), k1.end());
  for (int i : k5) CHECK(s1.count(i) == 1);
  CHECK(k5.size() <= k1.size());
}

TEST_CASE("estimate_ate basics") {
  const Vector c = Vector::Constant(40, 0.7);
  const DrAteResult r = estimate_ate(c, 3, 0.01);
  CHECK(r.ate == doctest::Approx(0.7));
  CHECK(r.se == 0.0);
  CHECK(r.n_used == 40);
  CHECK(r.n_trimmed == 3);

  Rng rng(6);
  Vector s(200);
  for (int i = 0; i < 200; ++i) s[i] = rng.next_normal();
  const DrAteResult a = estimate_ate(s, 0, 0.01);
  std::vector<double> shuffled(s.data(), s.data() + 200);
  Rng rng2(7);
  for (int i = 199; i > 0; --i) std::swap(shuffled[i], shuffled[rng2.next_below(i + 1)]);
  const DrAteResult b = estimate_ate(Eigen::Map<Vector>(shuffled.data(), 200), 0, 0.01);
  CHECK(a.ate == doctest::Approx(b.ate).epsilon(1e-12));
  CHECK(a.se == doctest::Approx(b.se).epsilon(1e-12));

  CHECK_THROWS_AS(estimate_ate(Vector(0), 0, 0.01), ValidationError);
}

TEST_CASE("constant outcome gives constant conditional means") {
  const int n = 300;
  const Matrix X = random_matrix(n, 3, 8);
  Rng rng(9);
  Vector dt(n);
  for (int i = 0; i < n; ++i) dt[i] = rng.next_double() < 0.5 ? 1.0 : 0.0;
  ForestParams fp;
  fp.n_trees = 80;
  fp.seed = 10;
  const NuisanceEstimates nui = crossfit_nuisances(X, Vector::Ones(n), dt, 3, fp, 11);
  for (int i = 0; i < n; ++i) {
    CHECK(nui.mu0[i] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nui.mu1[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("coin-flip treatment without signal concentrates propensities near one half") {
  const int n = 2000;
  const Matrix X = random_matrix(n, 4, 12);
  Rng rng(13);
  Vector y(n), dt(n);
  for (int i = 0; i < n; ++i) {
    dt[i] = rng.next_double() < 0.5 ? 1.0 : 0.0;
    y[i] = rng.next_double() < 0.3 ? 1.0 : 0.0;
  }
  ForestParams fp;
  fp.n_trees = 300;
  fp.min_node_size = 100;
  fp.seed = 14;
  const NuisanceEstimates nui = crossfit_nuisances(X, y, dt, 3, fp, 15);
  double mean = 0.0;
  int within_010 = 0;
  for (int i = 0; i < n; ++i) {
    mean += nui.p1[i];
    if (std::fabs(nui.p1[i] - 0.5) <= 0.10) ++within_010;
  }
  CHECK(mean / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK(within_010 >= n * 99 / 100);
  CHECK((nui.p1.array() - 0.5).abs().maxCoeff() < 0.15);
}

TEST_CASE("fold bookkeeping and degenerate folds") {
  const int n = 10;
  const Matrix X = random_matrix(n, 2, 16);
  Vector y(n), dt(n);
  for (int i = 0; i < n; ++i) {
    dt[i] = i % 2;
    y[i] = (i / 2) % 2;
  }
  ForestParams fp;
  fp.n_trees = 12;
  fp.min_node_size = 2;  // arm subsets hold only a handful of rows
  fp.seed = 17;
  // leave-one-out style: every fold holds a single row
  const NuisanceEstimates nui = crossfit_nuisances(X, y, dt, n, fp, 18);
  CHECK(nui.k_folds == n);
  std::set<int> folds(nui.fold.begin(), nui.fold.end());
  CHECK(folds.size() == static_cast<size_t>(n));
  CHECK(nui.p1.allFinite());

  // a single treated unit: its fold's complement has no treated rows
  Vector dt_one = Vector::Zero(n);
  dt_one[0] = 1.0;
  CHECK_THROWS_AS(crossfit_nuisances(X, y, dt_one, 3, fp, 19), ValidationError);
  CHECK_THROWS_AS(crossfit_nuisances(X, y, dt, 1, fp, 20), ValidationError);
}

TEST_CASE("oracle nuisances make the score mean match the truth") {
  DgpConfig cfg;
  cfg.n = 8000;
  cfg.seed = 21;
  const SimDraw sim = simulate(cfg);
  const Dataset ab = filter_always_buyers(sim.observed);
  const OracleTruth truth = oracle_truth(cfg, 300000);
  const int n = ab.n();
  const Matrix X = ab.x_matrix();
  const Matrix W = ab.w_matrix();
  const Vector y = ab.outcome();
  const Vector d = ab.treatment();
  Vector scores(n);
  for (int i = 0; i < n; ++i) {
    const Vector xi = X.row(i).transpose();
    const Vector wi = W.row(i).transpose();
    const double p1 = oracle_propensity_binary(cfg, xi, 0.3);
    const double m1 = oracle_mu(cfg, xi, wi, 1, 0.3);
    const double m0 = oracle_mu(cfg, xi, wi, 0, 0.3);
    const double dt = d[i] >= 0.3 ? 1.0 : 0.0;
    scores[i] = dr_score(y[i], dt, m0, m1, p1);
  }
  const double se = sample_sd(scores) / std::sqrt(static_cast<double>(n));
  CHECK(std::fabs(scores.mean() - truth.delta_ab_binary) < 3.0 * se);
}

TEST_CASE("propensity histograms count every observation once") {
  Rng rng(22);
  const int n = 400;
  Vector p(n), dt(n);
  for (int i = 0; i < n; ++i) {
    p[i] = rng.next_double();
    dt[i] = rng.next_double() < 0.4 ? 1.0 : 0.0;
  }
  const PropensityHistograms h = propensity_histograms(p, dt);
  long total = 0;
  for (int b = 0; b < h.n_bins; ++b) total += h.bins.treated[b] + h.bins.control[b];
  CHECK(total == n);
}

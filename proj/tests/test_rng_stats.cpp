#include <doctest.h>

#include <cmath>
#include <set>

#include "dfx/rng.hpp"
#include "dfx/stats.hpp"

using namespace dfx;

namespace {
// independent normal CDF: Simpson quadrature of the density from -12 to x
double quad_norm_cdf(double x) {
  const double lo = -12.0;
  const int steps = 20000;
  const double h = (x - lo) / steps;
  double acc = norm_pdf(lo) + norm_pdf(x);
  for (int i = 1; i < steps; ++i) {
    acc += norm_pdf(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  }
  return acc * h / 3.0;
}
}  // namespace

TEST_CASE("rng streams are deterministic and independent of each other") {
  Rng a(derive_seed(42, 1));
  Rng b(derive_seed(42, 1));
  Rng c(derive_seed(42, 2));
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t x = a.next_u64();
    all_equal = all_equal && (x == b.next_u64());
    any_diff = any_diff || (x != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("next_below stays in range and is roughly uniform") {
  Rng r(7);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 100000; ++i) {
    const int v = r.next_below(10);
    REQUIRE(v >= 0);
    REQUIRE(v < 10);
    ++counts[v];
  }
  for (int c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
}

TEST_CASE("normal draws have the right first two moments") {
  Rng r(123);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.next_normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::fabs(s / n) < 0.01);
  CHECK(std::fabs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("sample_without_replacement yields sorted distinct indices") {
  Rng r(5);
  const auto s = sample_without_replacement(50, 20, r);
  REQUIRE(s.size() == 20);
  std::set<int> uniq(s.begin(), s.end());
  CHECK(uniq.size() == 20);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(*uniq.begin() >= 0);
  CHECK(*uniq.rbegin() < 50);
}

TEST_CASE("norm_cdf matches an independent quadrature") {
  for (double x : {-3.0, -1.0, -0.25, 0.0, 0.5, 1.96, 3.5}) {
    CHECK(norm_cdf(x) == doctest::Approx(quad_norm_cdf(x)).epsilon(1e-9));
  }
}

TEST_CASE("chi-squared survival function has its closed-form special cases") {
  // df = 2: sf(x) = exp(-x/2)
  for (double x : {0.5, 2.0, 5.991, 10.0}) {
    CHECK(chi2_sf(x, 2) == doctest::Approx(std::exp(-x / 2.0)).epsilon(1e-12));
  }
  // df = 1: sf(x) = erfc(sqrt(x/2))
  for (double x : {0.1, 1.0, 3.841, 9.0}) {
    CHECK(chi2_sf(x, 1) == doctest::Approx(std::erfc(std::sqrt(x / 2.0))).epsilon(1e-12));
  }
  CHECK(chi2_sf(0.0, 3) == 1.0);
  CHECK(chi2_sf(5.0, 3) > chi2_sf(6.0, 3));
}

TEST_CASE("two_sided_p at the usual critical value") {
  CHECK(two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(two_sided_p(0.0) == doctest::Approx(1.0));
}

TEST_CASE("histogram counts cover everything and clamp the edges") {
  Vector v(5);
  v << 0.0, 0.5, 1.0, -2.0, 5.0;
  const Histogram h = make_histogram(v, 4, 0.0, 1.0);
  CHECK(h.total() == 5);
  CHECK(h.counts.front() >= 2);  // 0.0 and the clamped -2.0
  CHECK(h.counts.back() >= 2);   // 1.0 and the clamped 5.0
}

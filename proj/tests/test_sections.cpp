#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "dfx/csv.hpp"
#include "dfx/rng.hpp"
#include "dfx/sections.hpp"

using namespace dfx;

namespace {
SectionTable make_trip(std::vector<std::pair<double, double>> dist_disc) {
  SectionTable t;
  t.trip_id = "t";
  for (auto [d, disc] : dist_disc) {
    Section s;
    s.distance_km = d;
    s.discount = disc;
    t.sections.push_back(s);
  }
  return t;
}
}  // namespace

TEST_CASE("trip discount is the distance-weighted average") {
  CHECK(aggregate_trip_discount(make_trip({{10, 0.2}, {30, 0.4}})) ==
        doctest::Approx(0.35).epsilon(1e-12));
  CHECK(aggregate_trip_discount(make_trip({{123.4, 0.5}})) == doctest::Approx(0.5));
  CHECK(aggregate_trip_discount(make_trip({{25, 0.2}, {25, 0.4}})) ==
        doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("trip discount ignores section order and distance units") {
  Rng rng(99);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::pair<double, double>> secs;
    const int k = 1 + rng.next_below(6);
    for (int i = 0; i < k; ++i) {
      secs.push_back({0.5 + 200.0 * rng.next_double(), 0.7 * rng.next_double()});
    }
    const double base = aggregate_trip_discount(make_trip(secs));
    std::reverse(secs.begin(), secs.end());
    CHECK(aggregate_trip_discount(make_trip(secs)) == doctest::Approx(base).epsilon(1e-12));
    for (auto& [d, disc] : secs) d *= 3.25;
    CHECK(aggregate_trip_discount(make_trip(secs)) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("trip discount rejects bad tables") {
  CHECK_THROWS_AS(aggregate_trip_discount(SectionTable{}), ValidationError);
  SectionTable t = make_trip({{10, 0.2}});
  t.sections.push_back({5.0, std::nullopt, std::nullopt});
  CHECK_THROWS_AS(aggregate_trip_discount(t), ValidationError);
  SectionTable bad = make_trip({{0.0, 0.2}});
  CHECK_THROWS_AS(aggregate_trip_discount(bad), ValidationError);
}

namespace {
SectionTable util_trip(std::vector<std::optional<double>> utils) {
  SectionTable t;
  t.trip_id = "u";
  for (auto u : utils) {
    Section s;
    s.distance_km = 10.0;
    s.utilization = u;
    t.sections.push_back(s);
  }
  return t;
}
}  // namespace

TEST_CASE("utilization imputation follows the majority-missing rule") {
  const auto none = std::nullopt;

  // 2 of 3 missing: share 0.667, dropped
  auto r = impute_utilization(util_trip({20.0, none, none}));
  CHECK_FALSE(r.kept);
  CHECK(r.imputed_share == doctest::Approx(2.0 / 3.0));

  // exactly half missing is kept; imputed with the observed mean
  r = impute_utilization(util_trip({20.0, 40.0, none, none}));
  CHECK(r.kept);
  CHECK(r.utilization == doctest::Approx(30.0).epsilon(1e-12));
  CHECK(r.imputed_share == doctest::Approx(0.5));

  // nothing missing
  r = impute_utilization(util_trip({10.0, 50.0, 30.0}));
  CHECK(r.kept);
  CHECK(r.imputed_share == 0.0);
  CHECK(r.utilization == doctest::Approx(30.0).epsilon(1e-12));

  // everything missing
  r = impute_utilization(util_trip({none, none}));
  CHECK_FALSE(r.kept);

  CHECK_THROWS_AS(impute_utilization(SectionTable{}), ValidationError);
}

TEST_CASE("imputed share stays within half when a trip is kept") {
  Rng rng(4);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<std::optional<double>> utils;
    const int k = 1 + rng.next_below(8);
    for (int i = 0; i < k; ++i) {
      if (rng.next_double() < 0.4) {
        utils.push_back(std::nullopt);
      } else {
        utils.push_back(100.0 * rng.next_double());
      }
    }
    try {
      const auto r = impute_utilization(util_trip(utils));
      if (r.kept) {
        CHECK(r.imputed_share <= 0.5);
        CHECK(r.utilization >= 0.0);
        CHECK(r.utilization <= 100.0);
      } else {
        CHECK(r.imputed_share > 0.5);
      }
    } catch (const ValidationError&) {
      CHECK(utils.empty());
    }
  }
}

TEST_CASE("section CSV loads grouped and ordered") {
  const std::string path = "/tmp/dfx_test_sections.csv";
  write_text_file(path,
                  "trip_id,section_index,distance_km,discount,utilization\n"
                  "a,2,30,0.4,NA\n"
                  "a,1,10,0.2,55\n"
                  "b,1,12,0.1,\n");
  const auto trips = load_section_tables(path);
  REQUIRE(trips.size() == 2);
  CHECK(trips[0].trip_id == "a");
  REQUIRE(trips[0].sections.size() == 2);
  CHECK(trips[0].sections[0].distance_km == 10.0);  // ordered by section_index
  CHECK(trips[0].sections[1].distance_km == 30.0);
  CHECK_FALSE(trips[0].sections[1].utilization.has_value());
  CHECK(aggregate_trip_discount(trips[0]) == doctest::Approx(0.35));
  CHECK_FALSE(trips[1].sections[0].utilization.has_value());
  std::remove(path.c_str());
}

#include <doctest.h>

#include <cstdio>
#include <set>

#include "dfx/csv.hpp"
#include "dfx/dataset.hpp"

using namespace dfx;

namespace {
struct TmpFiles {
  std::string csv = "/tmp/dfx_test_survey.csv";
  std::string schema = "/tmp/dfx_test_survey.schema";
  ~TmpFiles() {
    std::remove(csv.c_str());
    std::remove(schema.c_str());
  }
};

void write_basic_schema(const std::string& path) {
  write_text_file(path,
                  "y.role = outcome\ny.kind = binary\n"
                  "d.role = treatment\nd.kind = continuous\n"
                  "s0.role = s0\ns0.kind = binary\n"
                  "x1.role = x\nx1.kind = continuous\n"
                  "w1.role = w\nw1.kind = binary\n");
}
}  // namespace

TEST_CASE("binarize_treatment is inclusive at the cut") {
  TreatmentSpec spec;
  CHECK(binarize_treatment(0.30, spec) == 1);
  CHECK(binarize_treatment(0.299, spec) == 0);
  CHECK(binarize_treatment(0.70, spec) == 1);
  CHECK_THROWS_AS(binarize_treatment(0.0, spec), ValidationError);
  CHECK_THROWS_AS(binarize_treatment(0.71, spec), ValidationError);
  TreatmentSpec bad;
  bad.binarize_threshold = 0.8;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("binarize_treatment is monotone in d") {
  TreatmentSpec spec;
  int prev = 0;
  for (double d = 0.01; d <= 0.70; d += 0.01) {
    const int b = binarize_treatment(d, spec);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("load_survey ingests a complete file as-is") {
  TmpFiles f;
  write_basic_schema(f.schema);
  write_text_file(f.csv,
                  "y,d,s0,x1,w1\n"
                  "1,0.2,1,0.5,0\n"
                  "0,0.4,0,-1.25,1\n"
                  "1,0.7,1,3,1\n");
  LoadReport rep;
  const Dataset ds = load_survey(f.csv, f.schema, TreatmentSpec{}, &rep);
  CHECK(ds.n() == 3);
  CHECK(rep.total_rejected() == 0);
  CHECK(ds.provenance == Provenance::ingested);
  CHECK(ds.outcome()[0] == 1.0);
  CHECK(ds.treatment()[1] == 0.4);
  CHECK(ds.s0()[2] == 1.0);
  CHECK(ds.x_matrix().cols() == 1);
  CHECK(ds.w_matrix().cols() == 1);
  CHECK(ds.controls_matrix().cols() == 2);
}

TEST_CASE("rows with a zero discount are rejected, not fatal") {
  TmpFiles f;
  write_basic_schema(f.schema);
  write_text_file(f.csv,
                  "y,d,s0,x1,w1\n"
                  "1,0,1,0.5,0\n"
                  "0,0.4,1,1.0,1\n");
  LoadReport rep;
  const Dataset ds = load_survey(f.csv, f.schema, TreatmentSpec{}, &rep);
  CHECK(ds.n() == 1);
  CHECK(rep.rejected_treatment_range == 1);
}

TEST_CASE("absent required fields and covariates are counted separately") {
  TmpFiles f;
  write_basic_schema(f.schema);
  write_text_file(f.csv,
                  "y,d,s0,x1,w1\n"
                  "NA,0.3,1,0.5,0\n"
                  "1,0.3,,0.5,0\n"
                  "1,0.3,1,NA,0\n"
                  "1,0.3,1,0.5,1\n");
  LoadReport rep;
  const Dataset ds = load_survey(f.csv, f.schema, TreatmentSpec{}, &rep);
  CHECK(ds.n() == 1);
  CHECK(rep.rejected_absent_required == 2);
  CHECK(rep.rejected_absent_covariate == 1);
}

TEST_CASE("categorical columns expand to one-hot indicators") {
  TmpFiles f;
  write_text_file(f.schema,
                  "y.role = outcome\ny.kind = binary\n"
                  "d.role = treatment\n"
                  "s0.role = s0\ns0.kind = binary\n"
                  "lang.role = x\nlang.kind = categorical\n");
  write_text_file(f.csv,
                  "y,d,s0,lang\n"
                  "1,0.2,1,de\n"
                  "0,0.4,1,fr\n"
                  "1,0.5,0,it\n"
                  "0,0.6,1,de\n");
  const Dataset ds = load_survey(f.csv, f.schema, TreatmentSpec{}, nullptr);
  const auto xcols = ds.role_indices(ColumnRole::x);
  REQUIRE(xcols.size() == 3);  // three levels
  CHECK(ds.columns[xcols[0]].name == "lang=de");
  CHECK(ds.columns[xcols[0]].source == "lang");
  CHECK(ds.columns[xcols[0]].kind == ColumnKind::binary);
  const Vector de = ds.col("lang=de");
  CHECK(de.sum() == 2.0);
  // each row belongs to exactly one level
  for (int i = 0; i < ds.n(); ++i) {
    double row_sum = 0.0;
    for (int j : xcols) row_sum += ds.values(i, j);
    CHECK(row_sum == 1.0);
  }
}

TEST_CASE("schema problems are fatal") {
  TmpFiles f;
  write_text_file(f.schema,
                  "y.role = outcome\n"
                  "s0.role = s0\n"
                  "x1.role = x\n");  // no treatment
  write_text_file(f.csv, "y,s0,x1\n1,1,0.5\n");
  CHECK_THROWS_AS(load_survey(f.csv, f.schema, TreatmentSpec{}, nullptr), ValidationError);

  write_basic_schema(f.schema);
  write_text_file(f.csv, "y,d,s0,x1,w1,extra\n1,0.2,1,0.5,0,9\n");
  CHECK_THROWS_AS(load_survey(f.csv, f.schema, TreatmentSpec{}, nullptr), ValidationError);

  write_text_file(f.csv, "y,d,s0,x1,w1\n1,0.2,1,abc,0\n");
  CHECK_THROWS_AS(load_survey(f.csv, f.schema, TreatmentSpec{}, nullptr), ValidationError);
}

namespace {
Dataset toy_dataset(int n, std::vector<double> s0_vals) {
  Dataset ds;
  ds.columns = {{"y", ColumnKind::binary, ColumnRole::outcome, "y"},
                {"d", ColumnKind::continuous, ColumnRole::treatment, "d"},
                {"s0", ColumnKind::binary, ColumnRole::s0, "s0"},
                {"x1", ColumnKind::continuous, ColumnRole::x, "x1"}};
  ds.values.resize(n, 4);
  for (int i = 0; i < n; ++i) {
    ds.values(i, 0) = i % 2;
    ds.values(i, 1) = 0.1 + 0.05 * (i % 10);
    ds.values(i, 2) = s0_vals[i % s0_vals.size()];
    ds.values(i, 3) = i * 0.37;
  }
  return ds;
}
}  // namespace

TEST_CASE("always-buyer filter keeps exactly the s0 = 1 rows and is idempotent") {
  const Dataset ds = toy_dataset(10, {1, 0, 1, 1, 0});
  bool warned = false;
  const Dataset ab = filter_always_buyers(ds, &warned);
  CHECK_FALSE(warned);
  CHECK(ab.n() == 6);
  CHECK((ab.s0().array() == 1.0).all());
  const Dataset ab2 = filter_always_buyers(ab);
  CHECK(ab2.n() == ab.n());
  CHECK(ab2.values == ab.values);

  const Dataset none = toy_dataset(4, {0});
  const Dataset empty = filter_always_buyers(none, &warned);
  CHECK(warned);
  CHECK(empty.n() == 0);

  const Dataset all = toy_dataset(4, {1});
  CHECK(filter_always_buyers(all).values == all.values);
}

TEST_CASE("train/test split partitions deterministically") {
  const Dataset ds = toy_dataset(100, {1});
  const auto [tr, te] = train_test_split(ds, 0.75, 7);
  CHECK(tr.n() == 75);
  CHECK(te.n() == 25);
  const auto [tr2, te2] = train_test_split(ds, 0.75, 7);
  CHECK(tr.values == tr2.values);
  CHECK(te.values == te2.values);
  const auto [tr3, te3] = train_test_split(ds, 0.75, 8);
  CHECK(tr.values != tr3.values);

  // partition: x1 values are unique so we can track rows
  std::set<double> seen;
  for (int i = 0; i < tr.n(); ++i) seen.insert(tr.col("x1")[i]);
  for (int i = 0; i < te.n(); ++i) {
    CHECK(seen.count(te.col("x1")[i]) == 0);
    seen.insert(te.col("x1")[i]);
  }
  CHECK(seen.size() == 100);

  const Dataset two = toy_dataset(2, {1});
  const auto [a, b] = train_test_split(two, 0.5, 1);
  CHECK(a.n() == 1);
  CHECK(b.n() == 1);
  const Dataset one = toy_dataset(1, {1});
  CHECK_THROWS_AS(train_test_split(one, 0.5, 1), ValidationError);
  CHECK_THROWS_AS(train_test_split(two, 1.5, 1), ValidationError);
}

TEST_CASE("balancing a binary outcome gives exactly twice the minority count") {
  Dataset ds = toy_dataset(60, {1});
  // 10 ones, 50 zeros
  for (int i = 0; i < 60; ++i) ds.values(i, 0) = i < 10 ? 1.0 : 0.0;
  const Dataset bal = balance_binary_outcome(ds, "y", 3);
  CHECK(bal.n() == 20);
  CHECK(bal.col("y").sum() == 10.0);

  // tiny case: 1 one, 5 zeros -> 2 rows
  Dataset tiny = toy_dataset(6, {1});
  for (int i = 0; i < 6; ++i) tiny.values(i, 0) = i == 0 ? 1.0 : 0.0;
  const Dataset tb = balance_binary_outcome(tiny, "y", 3);
  CHECK(tb.n() == 2);
  CHECK(tb.col("y").sum() == 1.0);

  // already balanced: unchanged
  Dataset even = toy_dataset(8, {1});
  for (int i = 0; i < 8; ++i) even.values(i, 0) = i < 4 ? 1.0 : 0.0;
  CHECK(balance_binary_outcome(even, "y", 3).values == even.values);

  Dataset constant = toy_dataset(5, {1});
  for (int i = 0; i < 5; ++i) constant.values(i, 0) = 1.0;
  CHECK_THROWS_AS(balance_binary_outcome(constant, "y", 3), ValidationError);
}

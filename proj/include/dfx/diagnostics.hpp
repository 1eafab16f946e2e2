#pragma once

#include <string>
#include <vector>

#include "dfx/dataset.hpp"
#include "dfx/settings.hpp"
#include "dfx/stats.hpp"
#include "dfx/types.hpp"

namespace dfx {

struct MonotonicityMethod {
  std::string method;
  double effect = 0.0;
  double se = 0.0;
  double p_value = 1.0;
  int n = 0;
  int n_trimmed = 0;
};

// Testable implication of weak monotonicity: the share of additional trips
// (1 - S(0)) must not decrease in the discount rate given X.
struct MonotonicityReport {
  MonotonicityMethod cf;   // average conditional change, causal forest
  MonotonicityMethod lr;   // linear-regression coefficient on D
  MonotonicityMethod dml;  // binary-contrast DML
  double share_positive = 0.0;
  double share_significant_10 = 0.0;
  double share_significant_5 = 0.0;
  Histogram hist;  // conditional changes
  bool violation_flag = false;  // some method significantly negative at 5%
  int n = 0;
};

// runs on the full survey sample, not the always-buyer subset
MonotonicityReport monotonicity_tests(const Dataset& full_survey,
                                      const EstimatorSettings& settings);

struct WaldEntry {
  std::string variable;  // W source column (one-hot blocks tested jointly)
  double coefficient = 0.0;  // first block coefficient
  double p_value = 1.0;
  int df = 0;
  bool skipped_collinear = false;
};

// D regressed on X plus one W variable at a time; robust Wald test per variable
struct WaldIndependenceTable {
  std::vector<WaldEntry> entries;
  double average_p = 1.0;     // over tested variables
  int n_significant_5 = 0;
  std::string caveat;
};

WaldIndependenceTable independence_wald(const Dataset& always_buyers);

struct BlpReport {
  std::vector<std::string> names;
  Vector coef;
  Vector se;
  Vector p_values;
  std::vector<int> dropped;
};

// best linear predictor: OLS of doubly robust scores on the basis, robust SEs
BlpReport blp_heterogeneity(const Vector& scores, const Matrix& basis,
                            const std::vector<std::string>& names);

}  // namespace dfx

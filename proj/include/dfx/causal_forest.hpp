#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfx/forest.hpp"
#include "dfx/types.hpp"

namespace dfx {

struct CausalForestParams {
  int n_trees = 1000;       // rounded up to a multiple of group_size
  int mtry = 0;             // 0: ceil(p/3)
  int min_node_size = 5;    // on the split half
  double subsample_frac = 0.632;
  int group_size = 4;       // trees sharing one subsample, for variance estimation
  uint64_t seed = 1;
  double var_floor = 1e-6;  // smallest usable var(D|X) for the orthogonal scores
  ForestParams nuisance;    // Y, D and var(D|X) forests

  void validate() const;
};

// Out-of-bag residuals of the outcome and treatment nuisance forests.
struct Residualization {
  Vector y_res;
  Vector d_res;
  std::vector<uint8_t> covered;  // both nuisance predictions available
  int n_uncovered = 0;
  double mean_y_res = 0.0;  // over covered rows
  double mean_d_res = 0.0;
  bool common_support_warning = false;  // residual treatment variation nearly zero
};

Residualization residualize(const Matrix& X, const Vector& y, const Vector& d,
                            const CausalForestParams& params);

// Honest causal tree: structure grown on the split half of the subsample,
// per-node effect aggregates taken from the disjoint estimation half.
struct CausalTree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> node_sum_yd;  // sum of y_res*d_res over estimation rows
  std::vector<double> node_sum_dd;  // sum of d_res^2
  std::vector<double> node_cnt;
  std::vector<int> split_idx;  // sorted, disjoint from est_idx
  std::vector<int> est_idx;
  std::vector<uint64_t> inbag;  // split u est
  bool usable = false;          // root has estimation mass and d-variation

  bool in_bag(int row) const { return (inbag[row >> 6] >> (row & 63)) & 1ull; }
  // deepest node whose estimation aggregates are valid (empty leaves merge upward)
  int response_node(const double* x, Eigen::Index stride) const;
};

struct CausalForest {
  CausalForestParams params;
  int n_train = 0;
  int p = 0;
  std::vector<std::string> feature_names;
  Matrix X;       // training covariates
  Vector y_res;   // training residuals
  Vector d_res;
  std::vector<CausalTree> trees;
  Forest var_forest;  // regression of d_res^2 on X
  Vector var_oob;     // its out-of-bag predictions
  std::vector<uint8_t> var_covered;
  Vector feat_min;  // training support, for extrapolation flags
  Vector feat_max;

  int n_groups() const { return static_cast<int>(trees.size()) / params.group_size; }
};

// pre: var(d_res) > 0 and every row covered by the residualization
CausalForest fit_causal_forest(const Matrix& X, const Vector& y_res, const Vector& d_res,
                               CausalForestParams params,
                               std::vector<std::string> feature_names = {});

struct CapeEstimate {
  double tau = 0.0;
  double se = 0.0;
  double p_value = 1.0;
  bool significant_5 = false;
  bool significant_10 = false;
  bool extrapolation = false;
};

// forest-weighted residual-on-residual effect at x; the standard error comes
// from the between-group variance of the half-sample groups, debiased by the
// within-group tree variance
CapeEstimate estimate_cape(const CausalForest& cf, const Vector& x);
std::vector<CapeEstimate> estimate_cape_all(const CausalForest& cf, const Matrix& X);

// leaf co-occupancy weights at x: nonnegative, sum to one
Vector forest_weights(const CausalForest& cf, const Vector& x);

struct DrScores {
  Vector scores;              // zero where not kept
  std::vector<uint8_t> kept;
  int n_kept = 0;
  int n_excluded_oob = 0;  // no out-of-bag tree covered the row
  int n_excluded_var = 0;  // var(D|X) estimate below the floor
};

// orthogonal scores tau_oob(X_i) + d_res*(y_res - tau_oob(X_i)*d_res)/var(X_i)
DrScores doubly_robust_scores(const CausalForest& cf);

struct ApeEstimate {
  double theta = 0.0;
  double se = 0.0;
  double p_value = 1.0;
  int n = 0;
  bool small_sample_warning = false;
};

// mean of the orthogonal scores; SE = sd(scores)/sqrt(n)
ApeEstimate ape_from_scores(const DrScores& s);
ApeEstimate estimate_ape(const CausalForest& cf);

// out-of-bag CAPE at training row i (quiet NaN when uncovered)
double oob_cape(const CausalForest& cf, int row);

// residualize + drop uncovered rows + fit, in one step
struct CausalPipeline {
  Residualization res;        // aligned with the input rows
  std::vector<int> kept_rows; // rows that entered the forest
  CausalForest cf;
};

CausalPipeline fit_causal_pipeline(const Matrix& X, const Vector& y, const Vector& d,
                                   const CausalForestParams& params,
                                   std::vector<std::string> feature_names = {});

}  // namespace dfx

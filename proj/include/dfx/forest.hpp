#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfx/types.hpp"

namespace dfx {

enum class ForestTask { regression, classification };

struct ForestParams {
  int n_trees = 1000;
  int mtry = 0;            // 0: ceil(sqrt(p)) classification, ceil(p/3) regression
  int min_node_size = 0;   // 0: 5 regression, 1 classification
  double subsample_frac = 0.632;
  bool with_replacement = false;
  uint64_t seed = 1;

  int resolved_mtry(int p, ForestTask task) const;
  int resolved_min_node(ForestTask task) const;
  void validate(int n, int p, ForestTask task) const;
};

// Axis-aligned binary tree in flat arrays. Rows with x[feature] <= threshold
// go left. Every node carries the (sum, count) of the training outcomes that
// reach it, so leaf means and residuals need no second pass over the data.
struct Tree {
  std::vector<int> feature;  // -1 marks a leaf
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> node_sum;
  std::vector<double> node_count;
  std::vector<int> subsample;       // drawn training rows (sorted; duplicates if bootstrap)
  std::vector<uint64_t> inbag;      // bitmask over the training rows
  std::vector<double> split_gain;   // per-feature impurity decrease, length p

  bool in_bag(int row) const { return (inbag[row >> 6] >> (row & 63)) & 1ull; }
  int leaf_for(const double* x, Eigen::Index stride) const;
  int n_nodes() const { return static_cast<int>(feature.size()); }
  int n_leaves() const;
};

struct Forest {
  ForestTask task = ForestTask::regression;
  ForestParams params;
  int n_train = 0;
  int p = 0;
  std::vector<std::string> feature_names;  // may be empty
  std::vector<Tree> trees;
  bool degenerate_warning = false;  // every tree collapsed to its root

  double tree_value(int t, const double* x, Eigen::Index stride) const;
};

Forest fit_forest(const Matrix& X, const Vector& y, ForestTask task, ForestParams params,
                  std::vector<std::string> feature_names = {});

// mean of per-tree leaf means; classification yields the class-1 share
Vector predict(const Forest& f, const Matrix& X);

struct OobPrediction {
  Vector value;                  // 0 where uncovered
  std::vector<uint8_t> covered;  // 1 if at least one tree left the row out
  int n_uncovered = 0;
};

// X must be the training matrix the forest was fitted on
OobPrediction oob_predict(const Forest& f, const Matrix& X);

// y[i] minus the out-of-bag forest prediction, averaged tree by tree as
// (count*y - sum)/count so that additive shifts of y cancel exactly.
OobPrediction oob_residuals(const Forest& f, const Matrix& X, const Vector& y);

struct ImportanceEntry {
  std::string feature;
  int index = 0;
  double importance = 0.0;
};

struct ImportanceTable {
  std::vector<ImportanceEntry> entries;  // sorted by importance, descending
};

// impurity decrease (variance for regression, Gini for classification)
// summed over the splits of each tree and averaged across trees
ImportanceTable variable_importance(const Forest& f);

double classification_accuracy(const Vector& probs, const Vector& actual,
                               double threshold = 0.5);

// out-of-bag error: MSE for regression, misclassification rate for classification
double oob_error(const Forest& f, const Matrix& X, const Vector& y);

// small grid search over {mtry} x {min_node_size} minimizing out-of-bag error
ForestParams tune_forest_params(const Matrix& X, const Vector& y, ForestTask task,
                                ForestParams base);

void save_forest(const Forest& f, const std::string& path);
Forest load_forest(const std::string& path);

}  // namespace dfx

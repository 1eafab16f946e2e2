#pragma once

#include <cstdint>

#include "dfx/causal_forest.hpp"
#include "dfx/dataset.hpp"
#include "dfx/forest.hpp"
#include "dfx/rng.hpp"

namespace dfx {

// One bag of estimator knobs shared by the CLI commands, diagnostics and the
// Monte Carlo harness.
struct EstimatorSettings {
  int trees = 1000;
  int folds = 3;
  double trim_threshold = 0.01;
  TreatmentSpec treatment;
  int bootstrap_reps = 2000;
  uint64_t seed = 1;
  int cf_group_size = 4;
  double subsample_frac = 0.632;
  int min_node_size = 0;     // 0: task default
  int mtry = 0;              // 0: task default
  int nuisance_min_node = 20;  // cross-fitted nuisance forests are kept smoother
  bool tune = false;         // grid-search mtry/min_node_size on out-of-bag error

  ForestParams forest_params(uint64_t salt) const {
    ForestParams p;
    p.n_trees = trees;
    p.mtry = mtry;
    p.min_node_size = min_node_size;
    p.subsample_frac = subsample_frac;
    p.seed = derive_seed(seed, 0x5e7, salt);
    return p;
  }

  // params for the partialling-out and cross-fitting forests; larger leaves
  // keep the nuisance noise out of the residual products
  ForestParams nuisance_params(uint64_t salt) const {
    ForestParams p = forest_params(salt);
    if (p.min_node_size == 0) p.min_node_size = nuisance_min_node;
    return p;
  }

  CausalForestParams causal_params(uint64_t salt) const {
    CausalForestParams p;
    p.n_trees = trees;
    p.mtry = mtry;
    p.min_node_size = min_node_size > 0 ? min_node_size : 5;
    p.subsample_frac = subsample_frac;
    p.group_size = cf_group_size;
    p.seed = derive_seed(seed, 0xcf5e7, salt);
    p.nuisance = nuisance_params(salt + 1);
    return p;
  }
};

}  // namespace dfx

#pragma once

#include <cstdint>
#include <vector>

#include "dfx/forest.hpp"
#include "dfx/types.hpp"

namespace dfx {

// Cross-fitted nuisances: each row's values come from forests trained on the
// other folds only.
struct NuisanceEstimates {
  Vector mu0;
  Vector mu1;
  Vector p1;  // clipped to [1e-6, 1 - 1e-6]
  std::vector<int> fold;
  int k_folds = 0;
};

NuisanceEstimates crossfit_nuisances(const Matrix& X, const Vector& y,
                                     const Vector& dtilde, int k_folds,
                                     const ForestParams& base, uint64_t seed);

// keep i iff threshold <= p1[i] <= 1 - threshold (boundary kept, outside dropped)
std::vector<int> trim(const Vector& p1, double threshold = 0.01);

// the doubly robust score mu1-mu0 + D(y-mu1)/p1 - (1-D)(y-mu0)/(1-p1)
double dr_score(double y, double dtilde, double mu0, double mu1, double p1);

Vector dr_scores(const Vector& y, const Vector& dtilde, const NuisanceEstimates& nui);

struct DrAteResult {
  double ate = 0.0;
  double se = 0.0;
  double p_value = 1.0;
  int n_used = 0;
  int n_trimmed = 0;
  double threshold = 0.0;
  bool small_sample_warning = false;
};

// sample mean of the kept scores with the influence-function standard error
DrAteResult estimate_ate(const Vector& scores_kept, int n_trimmed, double threshold);

// crossfit + trim + score + average in one step
DrAteResult dml_ate(const Matrix& X, const Vector& y, const Vector& dtilde, int k_folds,
                    double trim_threshold, const ForestParams& base, uint64_t seed);

// propensity-score histograms by arm, 30 bins over [0, 1]
struct PropensityHistograms {
  struct Bins {
    std::vector<long> treated;
    std::vector<long> control;
  };
  Bins bins;
  int n_bins = 30;
};

PropensityHistograms propensity_histograms(const Vector& p1, const Vector& dtilde,
                                           int n_bins = 30);

}  // namespace dfx

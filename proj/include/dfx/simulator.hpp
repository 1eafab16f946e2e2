#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfx/dataset.hpp"
#include "dfx/settings.hpp"
#include "dfx/types.hpp"

namespace dfx {

// Generative model. Demand covariates X drive the discount and the outcome;
// personal covariates W and the latent V drive selection; V also loads on the
// outcome, so conditioning on the buying decision opens a collider path.
//
//   D    = clamp(discount_base + discount_x'X + discount_noise*eps, floor, Q)
//   S(d) = 1{sel_base + sel_x'X + sel_w'W + sel_jump*1{d>0} + sel_slope*d + sel_noise*V >= 0}
//   P(Y(d)=1) = clamp((q(X) + v_loading*V) * d, 0, 1),   q(X) = clamp(q_base + q_x'X, q_lo, q_hi)
//
// sel_slope, sel_jump >= 0 give pathwise monotone selection; Y(0) = 0 always.
struct DgpConfig {
  int n = 5000;
  int p_x = 6;
  int p_w = 4;
  int x_binary = 2;  // trailing X columns are Bernoulli(0.5)
  int w_binary = 2;
  double q_max = 0.7;

  double discount_base = 0.35;
  std::vector<double> discount_x{0.05, 0.04};
  double discount_noise = 0.15;
  double discount_floor = 0.01;

  double sel_base = -0.65;
  std::vector<double> sel_x{0.25, 0.0, 0.2, 0.0, 0.15};
  std::vector<double> sel_w{0.1, 0.0, 0.1};
  double sel_slope = 2.2;   // discount slope, Assumption-3 monotonicity
  double sel_jump = 0.1;    // response to any positive discount
  double sel_noise = 1.0;   // scale of the standard-normal V

  double q_base = 0.035;
  std::vector<double> q_x{0.04, 0.0, 0.03, 0.0, 0.02};
  double q_lo = 0.01;
  double q_hi = 0.5;
  double v_loading = 0.08;  // collider strength

  double upsell_base = -1.0;
  std::vector<double> upsell_x{0.5, 0.0, -0.4};
  double upsell_d = 1.2;

  uint64_t seed = 1;

  void validate() const;
  static DgpConfig from_file(const std::string& path);
  void to_file(const std::string& path) const;
};

struct SimDraw {
  Dataset observed;  // survey rows only (S = 1)
  Matrix latent;     // all units, observed columns plus latent_ columns
  std::vector<std::string> latent_names;
  int n_total = 0;
  int n_survey = 0;

  int latent_col(const std::string& name) const;
};

SimDraw simulate(const DgpConfig& cfg);
SimDraw simulate_with_seed(const DgpConfig& cfg, uint64_t seed);

struct OracleTruth {
  double theta_ab = 0.0;  // true APE among always buyers
  double theta_se = 0.0;
  double delta_ab_binary = 0.0;  // true binarized contrast among always buyers
  double delta_se = 0.0;
  double monotonicity_slope = 0.0;  // true average d(1-S(0))/dd among survey buyers
  double monotonicity_se = 0.0;
  std::string computed_by;  // "analytic" or "monte-carlo"
  int draws = 0;
};

OracleTruth oracle_truth(const DgpConfig& cfg, int R, double binarize_threshold = 0.3);

// closed-form nuisances of the DGP, for unbiasedness and double-robustness
// checks (valid while the outcome probability clamp is inactive)
double oracle_propensity_binary(const DgpConfig& cfg, const Vector& x, double threshold);
double oracle_mu(const DgpConfig& cfg, const Vector& x, const Vector& w, int arm,
                 double threshold);
double oracle_q(const DgpConfig& cfg, const Vector& x);
double oracle_selection_index(const DgpConfig& cfg, const Vector& x, const Vector& w);

enum class McEstimator { cf_ape, dml_ate, ols, psm };

std::string to_string(McEstimator e);

struct McRep {
  double estimate = 0.0;
  double se = 0.0;
  int n_used = 0;
  int n_trimmed = 0;
  bool ok = false;
  std::string error;
};

struct McSummary {
  std::string estimator;
  double truth = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;  // share of reps whose 95% CI covers the truth
  double mean_se = 0.0;
  int reps_ok = 0;
  int reps_failed = 0;
  std::vector<McRep> reps;
};

// full pipeline per rep: simulate -> always buyers -> estimate, derived seeds
McSummary monte_carlo_study(const DgpConfig& cfg, int reps, McEstimator estimator,
                            const EstimatorSettings& settings, int oracle_draws = 400000);

}  // namespace dfx

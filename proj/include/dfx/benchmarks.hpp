#pragma once

#include <cstdint>
#include <vector>

#include "dfx/types.hpp"

namespace dfx {

struct OlsFit {
  Vector coef;      // 0 for dropped columns
  Vector se;        // HC1 sandwich
  Vector p_values;
  Vector residuals;
  std::vector<int> dropped;  // columns removed for rank deficiency
  std::vector<uint8_t> kept;
  int rank = 0;
  Matrix cov;                  // robust covariance of the kept columns
  std::vector<int> kept_cols;  // column order of cov
};

// least squares with heteroskedasticity-robust (HC1) standard errors;
// rank-deficient columns are dropped and reported
OlsFit ols(const Vector& y, const Matrix& design);

Matrix with_intercept(const Matrix& X);

struct ProbitFit {
  Vector coef;
  std::vector<double> ll_trace;  // accepted iterates, non-decreasing
  bool converged = false;
  int iterations = 0;
  bool separation_flag = false;
};

// Newton-Raphson MLE with Fisher scoring and step halving; convergence when
// max |gradient| < 1e-8 or the log-likelihood moves by less than 1e-10
ProbitFit probit_fit(const Vector& dtilde, const Matrix& design);

Vector probit_predict(const Vector& coef, const Matrix& design);
double probit_log_likelihood(const Vector& dtilde, const Matrix& design, const Vector& coef);

// 1-nearest-neighbor matching with replacement on the propensity score, both
// directions; distance ties resolve to the lower row index
double psm_ate(const Vector& y, const Vector& dtilde, const Vector& pscores);

struct PsmBootstrap {
  double se = 0.0;
  double p_value = 1.0;
  int redrawn = 0;  // replicates redrawn because one arm was missing
};

// resample rows, refit the probit, rematch; SE is the sd of replicate ATEs and
// the p-value a normal approximation around the point estimate
PsmBootstrap bootstrap_psm(const Vector& y, const Vector& dtilde, const Matrix& design,
                           int B, uint64_t seed, double ate_point);

}  // namespace dfx

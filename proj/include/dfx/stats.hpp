#pragma once

#include <vector>

#include "dfx/types.hpp"

namespace dfx {

double norm_pdf(double x);
double norm_cdf(double x);

// two-sided p-value for a standard-normal statistic
double two_sided_p(double z);

// survival function of the chi-squared distribution
double chi2_sf(double x, double df);

double mean(const Vector& v);
double sample_variance(const Vector& v);  // divisor n-1
double sample_sd(const Vector& v);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<long> counts;
  long total() const;
};

Histogram make_histogram(const Vector& v, int bins);
Histogram make_histogram(const Vector& v, int bins, double lo, double hi);

}  // namespace dfx

#include "dfx/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include "dfx/parallel.hpp"

namespace dfx {

namespace {
std::atomic<int> g_max_threads{0};

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
constexpr double kSqrt2 = 1.4142135623730950488016887;

// regularized lower incomplete gamma via its series expansion
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 1000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// regularized upper incomplete gamma via Lentz continued fraction
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}
}  // namespace

int max_threads() { return g_max_threads.load(); }
void set_max_threads(int k) { g_max_threads.store(k < 0 ? 0 : k); }

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double two_sided_p(double z) {
  if (std::isnan(z)) return 1.0;
  return std::erfc(std::fabs(z) / kSqrt2);
}

double chi2_sf(double x, double df) {
  if (df <= 0.0) throw std::invalid_argument("chi2_sf: df must be positive");
  if (x <= 0.0) return 1.0;
  return gamma_q(df / 2.0, x / 2.0);
}

double mean(const Vector& v) {
  if (v.size() == 0) throw std::invalid_argument("mean: empty vector");
  return v.mean();
}

double sample_variance(const Vector& v) {
  const Eigen::Index n = v.size();
  if (n < 2) throw std::invalid_argument("sample_variance: need at least 2 values");
  // shifted two-pass: identical inputs give exactly zero
  const double ref = v[0];
  double m = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) m += v[i] - ref;
  m /= static_cast<double>(n);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = (v[i] - ref) - m;
    acc += d * d;
  }
  return acc / static_cast<double>(n - 1);
}

double sample_sd(const Vector& v) { return std::sqrt(sample_variance(v)); }

long Histogram::total() const {
  long t = 0;
  for (long c : counts) t += c;
  return t;
}

Histogram make_histogram(const Vector& v, int bins, double lo, double hi) {
  if (bins < 1) throw std::invalid_argument("make_histogram: bins must be >= 1");
  if (!(hi > lo)) hi = lo + 1.0;
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  const double w = (hi - lo) / bins;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    int b = static_cast<int>(std::floor((v[i] - lo) / w));
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[b];
  }
  return h;
}

Histogram make_histogram(const Vector& v, int bins) {
  if (v.size() == 0) return make_histogram(v, bins, 0.0, 1.0);
  return make_histogram(v, bins, v.minCoeff(), v.maxCoeff());
}

}  // namespace dfx

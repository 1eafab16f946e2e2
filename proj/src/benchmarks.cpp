#include "dfx/benchmarks.hpp"

#include <algorithm>
#include <cmath>

#include "dfx/parallel.hpp"
#include "dfx/rng.hpp"
#include "dfx/stats.hpp"

namespace dfx {

Matrix with_intercept(const Matrix& X) {
  Matrix out(X.rows(), X.cols() + 1);
  out.col(0) = Vector::Ones(X.rows());
  out.rightCols(X.cols()) = X;
  return out;
}

OlsFit ols(const Vector& y, const Matrix& design) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (y.size() != n) throw ValidationError("ols: y and design row counts differ");
  if (n == 0 || p == 0) throw ValidationError("ols: empty design");

  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());
  if (rank == 0) throw ValidationError("ols: design matrix has rank zero");

  OlsFit fit;
  fit.rank = rank;
  fit.kept.assign(p, 0);
  const auto perm = qr.colsPermutation().indices();
  std::vector<int> kept_cols;
  for (int j = 0; j < rank; ++j) kept_cols.push_back(perm[j]);
  std::sort(kept_cols.begin(), kept_cols.end());
  for (int j : kept_cols) fit.kept[j] = 1;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!fit.kept[j]) fit.dropped.push_back(static_cast<int>(j));
  }
  const Eigen::Index k = static_cast<Eigen::Index>(kept_cols.size());
  if (n <= k) throw ValidationError("ols: more parameters than observations");

  Matrix Xk(n, k);
  for (Eigen::Index j = 0; j < k; ++j) Xk.col(j) = design.col(kept_cols[j]);

  const Matrix xtx = Xk.transpose() * Xk;
  Eigen::LDLT<Matrix> ldlt(xtx);
  const Vector beta = ldlt.solve(Xk.transpose() * y);
  const Vector resid = y - Xk * beta;

  // HC1: (X'X)^-1 X' diag(e^2) X (X'X)^-1 * n/(n-k)
  Matrix meat = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    meat.noalias() += resid[i] * resid[i] * Xk.row(i).transpose() * Xk.row(i);
  }
  const Matrix bread = ldlt.solve(Matrix::Identity(k, k));
  Matrix cov = bread * meat * bread;
  cov *= static_cast<double>(n) / static_cast<double>(n - k);

  fit.coef = Vector::Zero(p);
  fit.se = Vector::Zero(p);
  fit.p_values = Vector::Ones(p);
  for (Eigen::Index j = 0; j < k; ++j) {
    const int col = kept_cols[j];
    fit.coef[col] = beta[j];
    fit.se[col] = std::sqrt(std::max(cov(j, j), 0.0));
    fit.p_values[col] = fit.se[col] > 0.0 ? two_sided_p(beta[j] / fit.se[col])
                                          : (beta[j] == 0.0 ? 1.0 : 0.0);
  }
  fit.residuals = resid;
  fit.cov = cov;
  fit.kept_cols = kept_cols;
  return fit;
}

Vector probit_predict(const Vector& coef, const Matrix& design) {
  Vector out(design.rows());
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    out[i] = norm_cdf(design.row(i).dot(coef));
  }
  return out;
}

namespace {
// clamp the index so Phi stays representable; beyond this the fit is flagged
// as separated anyway
constexpr double kIndexCap = 35.0;
constexpr double kSeparationCoef = 30.0;

double clamped_index(double z) { return std::clamp(z, -kIndexCap, kIndexCap); }
}  // namespace

double probit_log_likelihood(const Vector& dtilde, const Matrix& design,
                             const Vector& coef) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    const double z = clamped_index(design.row(i).dot(coef));
    const double phi = norm_cdf(z);
    ll += dtilde[i] == 1.0 ? std::log(std::max(phi, 1e-300))
                           : std::log(std::max(1.0 - phi, 1e-300));
  }
  return ll;
}

ProbitFit probit_fit(const Vector& dtilde, const Matrix& design) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (dtilde.size() != n) throw ValidationError("probit_fit: length mismatch");
  int ones = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (dtilde[i] != 0.0 && dtilde[i] != 1.0) {
      throw ValidationError("probit_fit: outcome must be 0/1");
    }
    if (dtilde[i] == 1.0) ++ones;
  }
  if (ones == 0 || ones == n) throw ValidationError("probit_fit: a class is absent");

  ProbitFit fit;
  fit.coef = Vector::Zero(p);
  double ll = probit_log_likelihood(dtilde, design, fit.coef);
  fit.ll_trace.push_back(ll);

  const int max_iter = 100;
  for (int iter = 1; iter <= max_iter; ++iter) {
    fit.iterations = iter;
    // score and Fisher information
    Vector grad = Vector::Zero(p);
    Matrix info = Matrix::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = clamped_index(design.row(i).dot(fit.coef));
      const double f = norm_pdf(z);
      const double F = std::clamp(norm_cdf(z), 1e-12, 1.0 - 1e-12);
      const double s = dtilde[i] == 1.0 ? f / F : -f / (1.0 - F);
      grad.noalias() += s * design.row(i).transpose();
      const double wgt = f * f / (F * (1.0 - F));
      info.noalias() += wgt * design.row(i).transpose() * design.row(i);
    }
    if (grad.cwiseAbs().maxCoeff() < 1e-8) {
      fit.converged = true;
      break;
    }

    Eigen::LDLT<Matrix> ldlt(info);
    Vector step = ldlt.solve(grad);
    if (!step.allFinite()) throw EstimationError("probit_fit: singular information matrix");

    // step halving keeps the accepted log-likelihood monotone
    double scale = 1.0;
    Vector cand;
    double ll_new = ll;
    bool improved = false;
    for (int h = 0; h < 40; ++h) {
      cand = fit.coef + scale * step;
      ll_new = probit_log_likelihood(dtilde, design, cand);
      if (ll_new >= ll) {
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;

    const double delta = ll_new - ll;
    fit.coef = cand;
    ll = ll_new;
    fit.ll_trace.push_back(ll);

    if (fit.coef.cwiseAbs().maxCoeff() > kSeparationCoef) {
      fit.separation_flag = true;
      break;
    }
    if (std::fabs(delta) < 1e-10) {
      fit.converged = true;
      break;
    }
  }

  // perfect separation saturates the likelihood at interior-looking iterates;
  // flag it when the fitted index splits the classes cleanly
  double min_treated = std::numeric_limits<double>::infinity();
  double max_control = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = design.row(i).dot(fit.coef);
    if (dtilde[i] == 1.0) {
      min_treated = std::min(min_treated, z);
    } else {
      max_control = std::max(max_control, z);
    }
  }
  if (min_treated > max_control) {
    fit.separation_flag = true;
    fit.converged = false;
  }
  return fit;
}

double psm_ate(const Vector& y, const Vector& dtilde, const Vector& pscores) {
  const Eigen::Index n = y.size();
  if (dtilde.size() != n || pscores.size() != n) {
    throw ValidationError("psm_ate: length mismatch");
  }
  std::vector<int> treated, control;
  for (Eigen::Index i = 0; i < n; ++i) {
    (dtilde[i] == 1.0 ? treated : control).push_back(static_cast<int>(i));
  }
  if (treated.empty() || control.empty()) {
    throw ValidationError("psm_ate: both arms must be present");
  }

  // nearest opposite-arm unit by |dp|, ties to the lower original row index
  auto nearest = [&](const std::vector<int>& pool, double target) {
    int best = pool.front();
    double best_dist = std::fabs(pscores[best] - target);
    for (int j : pool) {
      const double dist = std::fabs(pscores[j] - target);
      if (dist < best_dist || (dist == best_dist && j < best)) {
        best = j;
        best_dist = dist;
      }
    }
    return best;
  };

  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (dtilde[i] == 1.0) {
      const int m = nearest(control, pscores[i]);
      acc += y[i] - y[m];
    } else {
      const int m = nearest(treated, pscores[i]);
      acc += y[m] - y[i];
    }
  }
  return acc / static_cast<double>(n);
}

PsmBootstrap bootstrap_psm(const Vector& y, const Vector& dtilde, const Matrix& design,
                           int B, uint64_t seed, double ate_point) {
  if (B < 2) throw ValidationError("bootstrap_psm: need at least 2 replicates");
  const int n = static_cast<int>(y.size());
  std::vector<double> ates(B, 0.0);
  std::vector<int> redrawn(B, 0);

  parallel_for(B, [&](int b) {
    Rng rng(derive_seed(seed, 0xb007, static_cast<uint64_t>(b)));
    Vector yb(n), db(n);
    Matrix Xb(n, design.cols());
    for (int attempt = 0;; ++attempt) {
      int ones = 0;
      for (int i = 0; i < n; ++i) {
        const int j = rng.next_below(n);
        yb[i] = y[j];
        db[i] = dtilde[j];
        Xb.row(i) = design.row(j);
        if (db[i] == 1.0) ++ones;
      }
      if (ones > 0 && ones < n) break;
      if (attempt > 1000) throw EstimationError("bootstrap_psm: cannot draw both arms");
      ++redrawn[b];
    }
    const ProbitFit pf = probit_fit(db, Xb);
    const Vector ps = probit_predict(pf.coef, Xb);
    ates[b] = psm_ate(yb, db, ps);
  });

  PsmBootstrap out;
  Vector v = Eigen::Map<Vector>(ates.data(), B);
  out.se = sample_sd(v);
  for (int r : redrawn) out.redrawn += r;
  if (out.se > 0.0) {
    out.p_value = two_sided_p(ate_point / out.se);
  } else {
    out.p_value = ate_point == 0.0 ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace dfx

#include "dfx/dml.hpp"

#include <algorithm>
#include <cmath>

#include "dfx/parallel.hpp"
#include "dfx/rng.hpp"
#include "dfx/stats.hpp"

namespace dfx {

namespace {
constexpr double kPropensityClip = 1e-6;

Matrix rows_of(const Matrix& X, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
  }
  return out;
}

Vector elems_of(const Vector& v, const std::vector<int>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = v[rows[r]];
  return out;
}
}  // namespace

NuisanceEstimates crossfit_nuisances(const Matrix& X, const Vector& y,
                                     const Vector& dtilde, int k_folds,
                                     const ForestParams& base, uint64_t seed) {
  const int n = static_cast<int>(X.rows());
  if (y.size() != n || dtilde.size() != n) {
    throw ValidationError("crossfit_nuisances: row counts differ");
  }
  if (k_folds < 2) throw ValidationError("crossfit_nuisances: k_folds must be >= 2");
  if (k_folds > n) throw ValidationError("crossfit_nuisances: more folds than rows");
  for (int i = 0; i < n; ++i) {
    if (dtilde[i] != 0.0 && dtilde[i] != 1.0) {
      throw ValidationError("crossfit_nuisances: treatment indicator must be 0/1");
    }
  }

  NuisanceEstimates out;
  out.k_folds = k_folds;
  out.fold.resize(n);
  out.mu0 = Vector::Zero(n);
  out.mu1 = Vector::Zero(n);
  out.p1 = Vector::Zero(n);

  // deterministic fold assignment: shuffled round-robin
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0xdf01d));
  shuffle(order, rng);
  for (int r = 0; r < n; ++r) out.fold[order[r]] = r % k_folds;

  // every training complement must contain both arms
  for (int f = 0; f < k_folds; ++f) {
    int treated = 0, control = 0;
    for (int i = 0; i < n; ++i) {
      if (out.fold[i] == f) continue;
      if (dtilde[i] == 1.0) {
        ++treated;
      } else {
        ++control;
      }
    }
    if (treated == 0 || control == 0) {
      throw ValidationError(
          "crossfit_nuisances: a training fold has a single treatment arm; use fewer "
          "folds");
    }
  }

  parallel_for(k_folds, [&](int f) {
    std::vector<int> train_treated, train_control, train_all, heldout;
    for (int i = 0; i < n; ++i) {
      if (out.fold[i] == f) {
        heldout.push_back(i);
      } else {
        train_all.push_back(i);
        (dtilde[i] == 1.0 ? train_treated : train_control).push_back(i);
      }
    }
    const Matrix Xh = rows_of(X, heldout);

    ForestParams p1_params = base;
    p1_params.seed = derive_seed(seed, 0xdf02, static_cast<uint64_t>(f));
    const Forest fp = fit_forest(rows_of(X, train_all), elems_of(dtilde, train_all),
                                 ForestTask::classification, p1_params);
    const Vector ph = predict(fp, Xh);

    ForestParams mu_params = base;
    mu_params.seed = derive_seed(seed, 0xdf03, static_cast<uint64_t>(f));
    const Forest f1 = fit_forest(rows_of(X, train_treated), elems_of(y, train_treated),
                                 ForestTask::regression, mu_params);
    const Vector m1 = predict(f1, Xh);

    mu_params.seed = derive_seed(seed, 0xdf04, static_cast<uint64_t>(f));
    const Forest f0 = fit_forest(rows_of(X, train_control), elems_of(y, train_control),
                                 ForestTask::regression, mu_params);
    const Vector m0 = predict(f0, Xh);

    for (size_t r = 0; r < heldout.size(); ++r) {
      const int i = heldout[r];
      out.mu1[i] = m1[static_cast<Eigen::Index>(r)];
      out.mu0[i] = m0[static_cast<Eigen::Index>(r)];
      out.p1[i] = std::clamp(ph[static_cast<Eigen::Index>(r)], kPropensityClip,
                             1.0 - kPropensityClip);
    }
  });
  return out;
}

std::vector<int> trim(const Vector& p1, double threshold) {
  if (!(threshold > 0.0 && threshold < 0.5)) {
    throw ValidationError("trim: threshold must lie in (0, 0.5)");
  }
  std::vector<int> kept;
  for (Eigen::Index i = 0; i < p1.size(); ++i) {
    if (!(p1[i] > 0.0 && p1[i] < 1.0)) {
      throw ValidationError("trim: propensity scores must lie in (0, 1)");
    }
    if (p1[i] >= threshold && p1[i] <= 1.0 - threshold) {
      kept.push_back(static_cast<int>(i));
    }
  }
  if (kept.empty()) throw EstimationError("trim: every observation was trimmed");
  return kept;
}

double dr_score(double y, double dtilde, double mu0, double mu1, double p1) {
  if (!(p1 > 0.0 && p1 < 1.0)) throw ValidationError("dr_score: p1 must lie in (0, 1)");
  return mu1 - mu0 + dtilde * (y - mu1) / p1 - (1.0 - dtilde) * (y - mu0) / (1.0 - p1);
}

Vector dr_scores(const Vector& y, const Vector& dtilde, const NuisanceEstimates& nui) {
  const Eigen::Index n = y.size();
  if (dtilde.size() != n || nui.mu0.size() != n) {
    throw ValidationError("dr_scores: length mismatch");
  }
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i] = dr_score(y[i], dtilde[i], nui.mu0[i], nui.mu1[i], nui.p1[i]);
  }
  return out;
}

DrAteResult estimate_ate(const Vector& scores_kept, int n_trimmed, double threshold) {
  if (scores_kept.size() == 0) throw ValidationError("estimate_ate: empty score vector");
  DrAteResult r;
  r.n_used = static_cast<int>(scores_kept.size());
  r.n_trimmed = n_trimmed;
  r.threshold = threshold;
  r.ate = scores_kept.mean();
  r.se = r.n_used >= 2 ? sample_sd(scores_kept) / std::sqrt(static_cast<double>(r.n_used))
                       : 0.0;
  if (r.se > 0.0) {
    r.p_value = two_sided_p(r.ate / r.se);
  } else {
    r.p_value = r.ate == 0.0 ? 1.0 : 0.0;
  }
  r.small_sample_warning = r.n_used < 30;
  return r;
}

DrAteResult dml_ate(const Matrix& X, const Vector& y, const Vector& dtilde, int k_folds,
                    double trim_threshold, const ForestParams& base, uint64_t seed) {
  const NuisanceEstimates nui = crossfit_nuisances(X, y, dtilde, k_folds, base, seed);
  const std::vector<int> kept = trim(nui.p1, trim_threshold);
  Vector scores(static_cast<Eigen::Index>(kept.size()));
  for (size_t r = 0; r < kept.size(); ++r) {
    const int i = kept[r];
    scores[static_cast<Eigen::Index>(r)] =
        dr_score(y[i], dtilde[i], nui.mu0[i], nui.mu1[i], nui.p1[i]);
  }
  return estimate_ate(scores, static_cast<int>(y.size() - kept.size()), trim_threshold);
}

PropensityHistograms propensity_histograms(const Vector& p1, const Vector& dtilde,
                                           int n_bins) {
  PropensityHistograms h;
  h.n_bins = n_bins;
  h.bins.treated.assign(n_bins, 0);
  h.bins.control.assign(n_bins, 0);
  for (Eigen::Index i = 0; i < p1.size(); ++i) {
    int b = static_cast<int>(std::floor(p1[i] * n_bins));
    b = std::clamp(b, 0, n_bins - 1);
    if (dtilde[i] == 1.0) {
      ++h.bins.treated[b];
    } else {
      ++h.bins.control[b];
    }
  }
  return h;
}

}  // namespace dfx

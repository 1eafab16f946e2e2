#include "dfx/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dfx/benchmarks.hpp"
#include "dfx/dml.hpp"

namespace dfx {

MonotonicityReport monotonicity_tests(const Dataset& full_survey,
                                      const EstimatorSettings& settings) {
  const Vector s0 = full_survey.s0();
  if ((s0.array() == s0[0]).all()) {
    throw ValidationError("monotonicity_tests: S(0) is constant, test undefined");
  }
  const Vector additional = Vector::Ones(s0.size()) - s0;  // 1 - S(0)
  const Vector d = full_survey.treatment();
  const Matrix X = full_survey.x_matrix();
  if (X.cols() == 0) throw ValidationError("monotonicity_tests: no X covariates");

  MonotonicityReport rep;
  rep.n = full_survey.n();

  // (a) causal forest: average derivative of (1 - S(0)) in D given X
  const CausalPipeline pipe = fit_causal_pipeline(X, additional, d,
                                                  settings.causal_params(0x30a0),
                                                  full_survey.x_names());
  const ApeEstimate ape = estimate_ape(pipe.cf);
  rep.cf = {"cf_average_change", ape.theta, ape.se, ape.p_value, ape.n, 0};

  const auto capes = estimate_cape_all(pipe.cf, pipe.cf.X);
  Vector taus(static_cast<Eigen::Index>(capes.size()));
  int pos = 0, sig5 = 0, sig10 = 0;
  for (size_t i = 0; i < capes.size(); ++i) {
    taus[static_cast<Eigen::Index>(i)] = capes[i].tau;
    if (capes[i].tau > 0.0) ++pos;
    if (capes[i].significant_5) ++sig5;
    if (capes[i].significant_10) ++sig10;
  }
  rep.share_positive = static_cast<double>(pos) / capes.size();
  rep.share_significant_5 = static_cast<double>(sig5) / capes.size();
  rep.share_significant_10 = static_cast<double>(sig10) / capes.size();
  rep.hist = make_histogram(taus, 30);

  // (b) linear regression of (1 - S(0)) on D and X
  Matrix design(full_survey.n(), 2 + X.cols());
  design.col(0) = Vector::Ones(full_survey.n());
  design.col(1) = d;
  design.rightCols(X.cols()) = X;
  const OlsFit lr = ols(additional, design);
  rep.lr = {"lr_coefficient", lr.coef[1], lr.se[1], lr.p_values[1], full_survey.n(), 0};

  // (c) DML contrast of the binarized treatment
  Vector dtilde(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    dtilde[i] = binarize_treatment(d[i], settings.treatment);
  }
  const DrAteResult dml = dml_ate(X, additional, dtilde, settings.folds,
                                  settings.trim_threshold,
                                  settings.nuisance_params(0x30a1), settings.seed);
  rep.dml = {"dml_contrast", dml.ate, dml.se, dml.p_value, dml.n_used, dml.n_trimmed};

  for (const auto* m : {&rep.cf, &rep.lr, &rep.dml}) {
    if (m->effect < 0.0 && m->p_value < 0.05) rep.violation_flag = true;
  }
  return rep;
}

WaldIndependenceTable independence_wald(const Dataset& always_buyers) {
  const Matrix X = always_buyers.x_matrix();
  const Vector d = always_buyers.treatment();
  const auto w_idx = always_buyers.role_indices(ColumnRole::w);
  if (w_idx.empty()) throw ValidationError("independence_wald: no W covariates");

  // group one-hot expansions of one categorical W variable for a joint test
  std::vector<std::pair<std::string, std::vector<int>>> groups;
  for (int idx : w_idx) {
    const std::string& src = always_buyers.columns[idx].source;
    bool found = false;
    for (auto& [name, cols] : groups) {
      if (name == src) {
        cols.push_back(idx);
        found = true;
      }
    }
    if (!found) groups.push_back({src, {idx}});
  }

  WaldIndependenceTable table;
  table.caveat =
      "p-values are per-variable and not adjusted for multiple hypothesis testing";
  double p_sum = 0.0;
  int tested = 0;
  for (const auto& [name, cols] : groups) {
    WaldEntry entry;
    entry.variable = name;
    const Eigen::Index base = 1 + X.cols();
    Matrix design(always_buyers.n(), base + static_cast<Eigen::Index>(cols.size()));
    design.col(0) = Vector::Ones(always_buyers.n());
    design.middleCols(1, X.cols()) = X;
    for (size_t j = 0; j < cols.size(); ++j) {
      design.col(base + static_cast<Eigen::Index>(j)) = always_buyers.values.col(cols[j]);
    }
    const OlsFit fit = ols(d, design);

    // block coefficients that survived the rank check
    std::vector<int> block;
    for (size_t j = 0; j < cols.size(); ++j) {
      const int col = static_cast<int>(base) + static_cast<int>(j);
      if (fit.kept[col]) block.push_back(col);
    }
    if (block.empty()) {
      entry.skipped_collinear = true;
      table.entries.push_back(entry);
      continue;
    }
    entry.df = static_cast<int>(block.size());
    entry.coefficient = fit.coef[block.front()];

    // Wald statistic beta' V^-1 beta on the robust covariance of the block
    std::vector<int> pos;
    for (int col : block) {
      const auto it = std::find(fit.kept_cols.begin(), fit.kept_cols.end(), col);
      pos.push_back(static_cast<int>(it - fit.kept_cols.begin()));
    }
    Vector beta(static_cast<Eigen::Index>(pos.size()));
    Matrix V(pos.size(), pos.size());
    for (size_t a = 0; a < pos.size(); ++a) {
      beta[static_cast<Eigen::Index>(a)] = fit.coef[block[a]];
      for (size_t b = 0; b < pos.size(); ++b) V(a, b) = fit.cov(pos[a], pos[b]);
    }
    Eigen::LDLT<Matrix> ldlt(V);
    const Vector solved = ldlt.solve(beta);
    const double stat = beta.dot(solved);
    entry.p_value = stat > 0.0 ? chi2_sf(stat, entry.df) : 1.0;
    p_sum += entry.p_value;
    ++tested;
    if (entry.p_value < 0.05) ++table.n_significant_5;
    table.entries.push_back(entry);
  }
  if (tested > 0) table.average_p = p_sum / tested;
  return table;
}

BlpReport blp_heterogeneity(const Vector& scores, const Matrix& basis,
                            const std::vector<std::string>& names) {
  if (static_cast<size_t>(basis.cols()) != names.size()) {
    throw ValidationError("blp_heterogeneity: basis/name count mismatch");
  }
  if (scores.size() != basis.rows()) {
    throw ValidationError("blp_heterogeneity: scores and basis rows differ");
  }
  bool has_intercept = false;
  for (Eigen::Index j = 0; j < basis.cols(); ++j) {
    if ((basis.col(j).array() == 1.0).all()) has_intercept = true;
  }
  if (!has_intercept) throw ValidationError("blp_heterogeneity: basis needs an intercept");

  const OlsFit fit = ols(scores, basis);
  BlpReport rep;
  rep.names = names;
  rep.coef = fit.coef;
  rep.se = fit.se;
  rep.p_values = fit.p_values;
  rep.dropped = fit.dropped;
  return rep;
}

}  // namespace dfx

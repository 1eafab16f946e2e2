#include "dfx/causal_forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dfx/parallel.hpp"
#include "dfx/rng.hpp"
#include "dfx/stats.hpp"

namespace dfx {

namespace {
constexpr uint64_t kSaltYForest = 0xca01;
constexpr uint64_t kSaltDForest = 0xca02;
constexpr uint64_t kSaltVarForest = 0xca03;
constexpr uint64_t kSaltGroup = 0xca04;
constexpr uint64_t kSaltTree = 0xca05;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// residual treatment variation below this share of the raw variation points
// to a deterministic discount rule, i.e. a failing common-support assumption
constexpr double kCommonSupportRatio = 0.15;

double split_point(double a, double b) {
  double thr = a + (b - a) / 2.0;
  if (thr >= b) thr = a;
  return thr;
}
}  // namespace

void CausalForestParams::validate() const {
  if (n_trees < 1) throw ValidationError("causal forest: n_trees must be >= 1");
  if (group_size < 1) throw ValidationError("causal forest: group_size must be >= 1");
  if (!(subsample_frac > 0.0 && subsample_frac <= 1.0)) {
    throw ValidationError("causal forest: subsample_frac must lie in (0, 1]");
  }
  if (min_node_size < 1) throw ValidationError("causal forest: min_node_size must be >= 1");
  if (!(var_floor > 0.0)) throw ValidationError("causal forest: var_floor must be positive");
}

Residualization residualize(const Matrix& X, const Vector& y, const Vector& d,
                            const CausalForestParams& params) {
  params.validate();
  const int n = static_cast<int>(X.rows());
  if (y.size() != n || d.size() != n) {
    throw ValidationError("residualize: X, y, d must have equal row counts");
  }
  ForestParams fp = params.nuisance;
  fp.seed = derive_seed(params.seed, kSaltYForest);
  const Forest fy = fit_forest(X, y, ForestTask::regression, fp);
  fp.seed = derive_seed(params.seed, kSaltDForest);
  const Forest fd = fit_forest(X, d, ForestTask::regression, fp);

  const OobPrediction ry = oob_residuals(fy, X, y);
  const OobPrediction rd = oob_residuals(fd, X, d);

  Residualization out;
  out.y_res = Vector::Zero(n);
  out.d_res = Vector::Zero(n);
  out.covered.assign(n, 0);
  double sy = 0.0, sd = 0.0;
  int k = 0;
  for (int i = 0; i < n; ++i) {
    if (ry.covered[i] && rd.covered[i]) {
      out.covered[i] = 1;
      out.y_res[i] = ry.value[i];
      out.d_res[i] = rd.value[i];
      sy += ry.value[i];
      sd += rd.value[i];
      ++k;
    } else {
      ++out.n_uncovered;
    }
  }
  if (k == 0) throw EstimationError("residualize: no out-of-bag coverage at all");
  out.mean_y_res = sy / k;
  out.mean_d_res = sd / k;

  // compare residual and raw treatment variation on the covered rows
  double var_d = 0.0, var_res = 0.0, md = 0.0;
  for (int i = 0; i < n; ++i) {
    if (out.covered[i]) md += d[i];
  }
  md /= k;
  for (int i = 0; i < n; ++i) {
    if (!out.covered[i]) continue;
    var_d += (d[i] - md) * (d[i] - md);
    var_res += (out.d_res[i] - out.mean_d_res) * (out.d_res[i] - out.mean_d_res);
  }
  out.common_support_warning = var_d <= 0.0 || var_res < kCommonSupportRatio * var_d;
  return out;
}

int CausalTree::response_node(const double* x, Eigen::Index stride) const {
  int node = 0;
  while (feature[node] >= 0) {
    const int next = x[feature[node] * stride] <= threshold[node] ? left[node] : right[node];
    if (!(node_cnt[next] > 0.0 && node_sum_dd[next] > 0.0)) break;
    node = next;
  }
  return node;
}

namespace {

struct CausalBuildContext {
  const Matrix& X;
  const Vector& yd;  // y_res * d_res
  const Vector& dd;  // d_res^2
  int mtry;
  int min_node;
  Rng& rng;
};

// Split criterion: maximize sum over children of n_child*(tau_child - tau_parent)^2
// where tau = sum(yd)/sum(dd) on the split half.
void build_causal_tree(const CausalBuildContext& ctx, std::vector<int>& idx,
                       CausalTree& tree) {
  const int p = static_cast<int>(ctx.X.cols());

  struct Pending {
    int node;
    int lo;
    int hi;
  };

  auto add_node = [&tree]() {
    tree.feature.push_back(-1);
    tree.threshold.push_back(0.0);
    tree.left.push_back(-1);
    tree.right.push_back(-1);
    tree.node_sum_yd.push_back(0.0);
    tree.node_sum_dd.push_back(0.0);
    tree.node_cnt.push_back(0.0);
    return static_cast<int>(tree.feature.size()) - 1;
  };

  std::vector<std::pair<double, int>> vals;
  std::vector<int> pool(p);
  std::vector<Pending> stack;
  stack.push_back({add_node(), 0, static_cast<int>(idx.size())});

  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    const int nn = cur.hi - cur.lo;

    double syd = 0.0, sdd = 0.0;
    for (int i = cur.lo; i < cur.hi; ++i) {
      syd += ctx.yd[idx[i]];
      sdd += ctx.dd[idx[i]];
    }
    if (!(sdd > 0.0) || nn < 2 * ctx.min_node) continue;
    const double tau_p = syd / sdd;

    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < ctx.mtry; ++i) {
      std::swap(pool[i], pool[i + ctx.rng.next_below(p - i)]);
    }
    std::sort(pool.begin(), pool.begin() + ctx.mtry);

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_score = kNegInf;
    for (int c = 0; c < ctx.mtry; ++c) {
      const int f = pool[c];
      vals.clear();
      for (int i = cur.lo; i < cur.hi; ++i) {
        vals.emplace_back(ctx.X(idx[i], f), idx[i]);
      }
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;

      double syd_l = 0.0, sdd_l = 0.0;
      for (int k = 0; k + 1 < nn; ++k) {
        syd_l += ctx.yd[vals[k].second];
        sdd_l += ctx.dd[vals[k].second];
        if (vals[k].first == vals[k + 1].first) continue;
        const int cl = k + 1;
        const int cr = nn - cl;
        if (cl < ctx.min_node || cr < ctx.min_node) continue;
        const double sdd_r = sdd - sdd_l;
        if (!(sdd_l > 0.0) || !(sdd_r > 0.0)) continue;
        const double tl = syd_l / sdd_l - tau_p;
        const double tr = (syd - syd_l) / sdd_r - tau_p;
        const double score = cl * tl * tl + cr * tr * tr;
        if (score > best_score) {
          best_feature = f;
          best_threshold = split_point(vals[k].first, vals[k + 1].first);
          best_score = score;
        }
      }
    }
    if (best_feature < 0) continue;

    tree.feature[cur.node] = best_feature;
    tree.threshold[cur.node] = best_threshold;
    auto mid_it = std::stable_partition(
        idx.begin() + cur.lo, idx.begin() + cur.hi,
        [&](int i) { return ctx.X(i, best_feature) <= best_threshold; });
    const int mid = static_cast<int>(mid_it - idx.begin());

    const int l = add_node();
    const int r = add_node();
    tree.left[cur.node] = l;
    tree.right[cur.node] = r;
    stack.push_back({r, mid, cur.hi});
    stack.push_back({l, cur.lo, mid});
  }
}

}  // namespace

CausalForest fit_causal_forest(const Matrix& X, const Vector& y_res, const Vector& d_res,
                               CausalForestParams params,
                               std::vector<std::string> feature_names) {
  params.validate();
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (y_res.size() != n || d_res.size() != n) {
    throw ValidationError("fit_causal_forest: residual vectors must match X");
  }
  if (n < 4) throw ValidationError("fit_causal_forest: need at least 4 rows");
  {
    const double md = d_res.mean();
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += (d_res[i] - md) * (d_res[i] - md);
    if (!(v > 0.0)) {
      throw ValidationError("fit_causal_forest: treatment residuals have zero variance");
    }
  }

  CausalForest cf;
  cf.params = params;
  cf.n_train = n;
  cf.p = p;
  cf.feature_names = std::move(feature_names);
  cf.X = X;
  cf.y_res = y_res;
  cf.d_res = d_res;
  cf.feat_min = X.colwise().minCoeff().transpose();
  cf.feat_max = X.colwise().maxCoeff().transpose();

  const int g = params.group_size;
  const int n_groups = (params.n_trees + g - 1) / g;
  const int n_trees = n_groups * g;
  cf.trees.resize(n_trees);

  Vector yd(n), dd(n);
  for (int i = 0; i < n; ++i) {
    yd[i] = y_res[i] * d_res[i];
    dd[i] = d_res[i] * d_res[i];
  }

  const int mtry = params.mtry > 0 ? std::min(params.mtry, p)
                                   : std::clamp(static_cast<int>(std::ceil(p / 3.0)), 1, p);
  int sub_k = static_cast<int>(std::llround(params.subsample_frac * n));
  sub_k = std::clamp(sub_k, 4, n);

  parallel_for(n_trees, [&](int t) {
    CausalTree& tree = cf.trees[t];
    // trees of one group share the subsample; the honest partition and the
    // split-variable draws differ per tree
    Rng group_rng(derive_seed(params.seed, kSaltGroup, static_cast<uint64_t>(t / g)));
    std::vector<int> sub = sample_without_replacement(n, sub_k, group_rng);
    Rng tree_rng(derive_seed(params.seed, kSaltTree, static_cast<uint64_t>(t)));
    shuffle(sub, tree_rng);
    const int half = static_cast<int>(sub.size()) / 2;
    tree.split_idx.assign(sub.begin(), sub.begin() + half);
    tree.est_idx.assign(sub.begin() + half, sub.end());
    std::sort(tree.split_idx.begin(), tree.split_idx.end());
    std::sort(tree.est_idx.begin(), tree.est_idx.end());

    tree.inbag.assign((n + 63) / 64, 0ull);
    for (int i : sub) tree.inbag[i >> 6] |= 1ull << (i & 63);

    std::vector<int> idx = tree.split_idx;
    CausalBuildContext ctx{X, yd, dd, mtry, params.min_node_size, tree_rng};
    build_causal_tree(ctx, idx, tree);

    // estimation half: accumulate along each row's full root-to-leaf path so
    // that leaves without estimation mass can fall back to their ancestors
    const Eigen::Index stride = X.outerStride();
    for (int i : tree.est_idx) {
      const double* row = X.data() + i;
      int node = 0;
      for (;;) {
        tree.node_sum_yd[node] += yd[i];
        tree.node_sum_dd[node] += dd[i];
        tree.node_cnt[node] += 1.0;
        if (tree.feature[node] < 0) break;
        node = row[tree.feature[node] * stride] <= tree.threshold[node] ? tree.left[node]
                                                                        : tree.right[node];
      }
    }
    tree.usable = tree.node_cnt[0] > 0.0 && tree.node_sum_dd[0] > 0.0;
  });

  // var(D|X) forest for the orthogonal scores
  ForestParams vp = params.nuisance;
  vp.seed = derive_seed(params.seed, kSaltVarForest);
  cf.var_forest = fit_forest(X, dd, ForestTask::regression, vp);
  const OobPrediction vo = oob_predict(cf.var_forest, X);
  cf.var_oob = vo.value;
  cf.var_covered = vo.covered;
  return cf;
}

namespace {

// per-tree leaf aggregates at x, normalized by estimation count
struct TreeMoments {
  double num = 0.0;
  double den = 0.0;
  bool ok = false;
};

TreeMoments tree_moments(const CausalTree& tree, const double* x, Eigen::Index stride) {
  TreeMoments m;
  if (!tree.usable) return m;
  const int node = tree.response_node(x, stride);
  m.num = tree.node_sum_yd[node] / tree.node_cnt[node];
  m.den = tree.node_sum_dd[node] / tree.node_cnt[node];
  m.ok = true;
  return m;
}

struct GroupVariance {
  double variance = 0.0;
  bool ok = false;
};

// between-group variance of the group effects, debiased by the within-group
// variance of single-tree effects
GroupVariance grouped_variance(const std::vector<TreeMoments>& m, int group_size,
                               double tau_forest) {
  const int n_groups = static_cast<int>(m.size()) / group_size;
  if (n_groups < 2 || group_size < 2) return {};
  std::vector<double> group_tau;
  std::vector<double> within;
  for (int gid = 0; gid < n_groups; ++gid) {
    double num = 0.0, den = 0.0;
    std::vector<double> taus;
    for (int j = 0; j < group_size; ++j) {
      const TreeMoments& t = m[gid * group_size + j];
      if (!t.ok) continue;
      num += t.num;
      den += t.den;
      if (t.den > 0.0) taus.push_back(t.num / t.den);
    }
    if (!(den > 0.0)) continue;
    group_tau.push_back(num / den);
    if (taus.size() >= 2) {
      double tm = 0.0;
      for (double v : taus) tm += v;
      tm /= static_cast<double>(taus.size());
      double acc = 0.0;
      for (double v : taus) acc += (v - tm) * (v - tm);
      within.push_back(acc / static_cast<double>(taus.size() - 1));
    }
  }
  if (group_tau.size() < 2) return {};
  double between = 0.0;
  for (double v : group_tau) between += (v - tau_forest) * (v - tau_forest);
  between /= static_cast<double>(group_tau.size() - 1);
  double within_mean = 0.0;
  if (!within.empty()) {
    for (double v : within) within_mean += v;
    within_mean /= static_cast<double>(within.size());
  }
  GroupVariance out;
  out.variance = std::max(between - within_mean / group_size, 0.0);
  out.ok = true;
  return out;
}

}  // namespace

CapeEstimate estimate_cape(const CausalForest& cf, const Vector& x) {
  if (x.size() != cf.p) throw ValidationError("estimate_cape: feature count mismatch");
  const Eigen::Index stride = 1;
  std::vector<TreeMoments> m(cf.trees.size());
  double num = 0.0, den = 0.0;
  for (size_t t = 0; t < cf.trees.size(); ++t) {
    m[t] = tree_moments(cf.trees[t], x.data(), stride);
    if (m[t].ok) {
      num += m[t].num;
      den += m[t].den;
    }
  }
  if (!(den > 0.0)) throw EstimationError("estimate_cape: no usable trees at this point");

  CapeEstimate est;
  est.tau = num / den;
  const GroupVariance gv = grouped_variance(m, cf.params.group_size, est.tau);
  est.se = gv.ok ? std::sqrt(gv.variance) : std::numeric_limits<double>::quiet_NaN();
  if (gv.ok && est.se > 0.0) {
    est.p_value = two_sided_p(est.tau / est.se);
  } else if (gv.ok) {
    est.p_value = est.tau == 0.0 ? 1.0 : 0.0;
  } else {
    est.p_value = std::numeric_limits<double>::quiet_NaN();
  }
  est.significant_5 = est.p_value < 0.05;
  est.significant_10 = est.p_value < 0.10;
  for (int j = 0; j < cf.p; ++j) {
    if (x[j] < cf.feat_min[j] || x[j] > cf.feat_max[j]) est.extrapolation = true;
  }
  return est;
}

std::vector<CapeEstimate> estimate_cape_all(const CausalForest& cf, const Matrix& X) {
  if (static_cast<int>(X.cols()) != cf.p) {
    throw ValidationError("estimate_cape_all: feature count mismatch");
  }
  std::vector<CapeEstimate> out(X.rows());
  parallel_for(static_cast<int>(X.rows()), [&](int i) {
    const Vector x = X.row(i).transpose();
    out[i] = estimate_cape(cf, x);
  });
  return out;
}

namespace {
// whether training row i reaches the given node of the tree
bool row_reaches(const CausalTree& tree, const double* row, Eigen::Index stride,
                 int target) {
  int node = 0;
  for (;;) {
    if (node == target) return true;
    if (tree.feature[node] < 0) return false;
    node = row[tree.feature[node] * stride] <= tree.threshold[node] ? tree.left[node]
                                                                    : tree.right[node];
  }
}
}  // namespace

Vector forest_weights(const CausalForest& cf, const Vector& x) {
  if (x.size() != cf.p) throw ValidationError("forest_weights: feature count mismatch");
  Vector w = Vector::Zero(cf.n_train);
  const Eigen::Index xstride = 1;
  const Eigen::Index tstride = cf.X.outerStride();
  int used = 0;
  for (const auto& tree : cf.trees) {
    if (!tree.usable) continue;
    ++used;
  }
  if (used == 0) throw EstimationError("forest_weights: no usable trees");
  for (const auto& tree : cf.trees) {
    if (!tree.usable) continue;
    const int node = tree.response_node(x.data(), xstride);
    const double cnt = tree.node_cnt[node];
    for (int i : tree.est_idx) {
      if (row_reaches(tree, cf.X.data() + i, tstride, node)) {
        w[i] += 1.0 / (cnt * used);
      }
    }
  }
  return w;
}

double oob_cape(const CausalForest& cf, int row) {
  const Eigen::Index stride = cf.X.outerStride();
  const double* x = cf.X.data() + row;
  double num = 0.0, den = 0.0;
  bool any = false;
  for (const auto& tree : cf.trees) {
    if (!tree.usable || tree.in_bag(row)) continue;
    const TreeMoments m = tree_moments(tree, x, stride);
    if (!m.ok) continue;
    num += m.num;
    den += m.den;
    any = true;
  }
  if (!any || !(den > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return num / den;
}

DrScores doubly_robust_scores(const CausalForest& cf) {
  const int n = cf.n_train;
  DrScores out;
  out.scores = Vector::Zero(n);
  out.kept.assign(n, 0);
  std::vector<double> tau(n, 0.0);
  std::vector<uint8_t> tau_ok(n, 0);
  parallel_for(n, [&](int i) {
    const double t = oob_cape(cf, i);
    if (std::isfinite(t)) {
      tau[i] = t;
      tau_ok[i] = 1;
    }
  });
  for (int i = 0; i < n; ++i) {
    if (!tau_ok[i]) {
      ++out.n_excluded_oob;
      continue;
    }
    if (!cf.var_covered[i] || !(cf.var_oob[i] >= cf.params.var_floor)) {
      ++out.n_excluded_var;
      continue;
    }
    const double v = cf.var_oob[i];
    out.scores[i] = tau[i] + cf.d_res[i] * (cf.y_res[i] - tau[i] * cf.d_res[i]) / v;
    out.kept[i] = 1;
    ++out.n_kept;
  }
  if (out.n_kept == 0) throw EstimationError("doubly_robust_scores: no usable observations");
  return out;
}

ApeEstimate ape_from_scores(const DrScores& s) {
  ApeEstimate est;
  est.n = s.n_kept;
  Vector kept(s.n_kept);
  int k = 0;
  for (Eigen::Index i = 0; i < s.scores.size(); ++i) {
    if (s.kept[i]) kept[k++] = s.scores[i];
  }
  est.theta = kept.mean();
  est.se = s.n_kept >= 2 ? sample_sd(kept) / std::sqrt(static_cast<double>(s.n_kept)) : 0.0;
  if (est.se > 0.0) {
    est.p_value = two_sided_p(est.theta / est.se);
  } else {
    est.p_value = est.theta == 0.0 ? 1.0 : 0.0;
  }
  est.small_sample_warning = s.n_kept < 30;
  return est;
}

ApeEstimate estimate_ape(const CausalForest& cf) {
  return ape_from_scores(doubly_robust_scores(cf));
}

CausalPipeline fit_causal_pipeline(const Matrix& X, const Vector& y, const Vector& d,
                                   const CausalForestParams& params,
                                   std::vector<std::string> feature_names) {
  CausalPipeline out;
  out.res = residualize(X, y, d, params);
  for (int i = 0; i < static_cast<int>(X.rows()); ++i) {
    if (out.res.covered[i]) out.kept_rows.push_back(i);
  }
  if (out.kept_rows.empty()) {
    throw EstimationError("causal pipeline: every row lost out-of-bag coverage");
  }
  Matrix Xk(out.kept_rows.size(), X.cols());
  Vector yk(out.kept_rows.size()), dk(out.kept_rows.size());
  for (size_t r = 0; r < out.kept_rows.size(); ++r) {
    Xk.row(static_cast<Eigen::Index>(r)) = X.row(out.kept_rows[r]);
    yk[static_cast<Eigen::Index>(r)] = out.res.y_res[out.kept_rows[r]];
    dk[static_cast<Eigen::Index>(r)] = out.res.d_res[out.kept_rows[r]];
  }
  out.cf = fit_causal_forest(Xk, yk, dk, params, std::move(feature_names));
  return out;
}

}  // namespace dfx

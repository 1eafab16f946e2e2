#include "dfx/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dfx/csv.hpp"
#include "dfx/parallel.hpp"
#include "dfx/rng.hpp"

namespace dfx {

int ForestParams::resolved_mtry(int p, ForestTask task) const {
  if (mtry > 0) return std::min(mtry, p);
  const double raw = task == ForestTask::classification
                         ? std::sqrt(static_cast<double>(p))
                         : static_cast<double>(p) / 3.0;
  return std::clamp(static_cast<int>(std::ceil(raw)), 1, p);
}

int ForestParams::resolved_min_node(ForestTask task) const {
  if (min_node_size > 0) return min_node_size;
  return task == ForestTask::classification ? 1 : 5;
}

void ForestParams::validate(int n, int p, ForestTask task) const {
  if (n_trees < 1) throw ValidationError("forest: n_trees must be >= 1");
  if (n <= 0) throw ValidationError("forest: zero training rows");
  if (p <= 0) throw ValidationError("forest: zero features");
  if (!(subsample_frac > 0.0 && subsample_frac <= 1.0)) {
    throw ValidationError("forest: subsample_frac must lie in (0, 1]");
  }
  if (mtry > p) throw ValidationError("forest: mtry exceeds feature count");
  if (n < 2 * resolved_min_node(task)) {
    throw ValidationError("forest: fewer than 2*min_node_size training rows");
  }
}

int Tree::leaf_for(const double* x, Eigen::Index stride) const {
  int node = 0;
  while (feature[node] >= 0) {
    node = x[feature[node] * stride] <= threshold[node] ? left[node] : right[node];
  }
  return node;
}

int Tree::n_leaves() const {
  int k = 0;
  for (int f : feature) {
    if (f < 0) ++k;
  }
  return k;
}

double Forest::tree_value(int t, const double* x, Eigen::Index stride) const {
  const Tree& tr = trees[t];
  const int leaf = tr.leaf_for(x, stride);
  return tr.node_sum[leaf] / tr.node_count[leaf];
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double score = kNegInf;
};

// midpoint that is guaranteed to separate a < b under the x <= thr rule
double split_point(double a, double b) {
  double thr = a + (b - a) / 2.0;
  if (thr >= b) thr = a;
  return thr;
}

struct TreeBuildContext {
  const Matrix& X;
  const Vector& y;
  int mtry;
  int min_node;
  double impurity_factor;  // 1 for variance, 2 for Gini on 0/1 outcomes
  Rng& rng;
};

// Grows one tree on idx (a segment-owned index buffer). Split scores use the
// sum-of-squares identity: maximizing S_L^2/n_L + S_R^2/n_R minimizes both the
// residual sum of squares and, for 0/1 outcomes, the weighted Gini impurity.
void build_tree(const TreeBuildContext& ctx, std::vector<int>& idx, Tree& tree) {
  const int p = static_cast<int>(ctx.X.cols());
  tree.split_gain.assign(p, 0.0);

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
    tree.node_sum.push_back(0.0);
    tree.node_count.push_back(0.0);
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

    double sum = 0.0;
    bool pure = true;
    const double y0 = ctx.y[idx[cur.lo]];
    for (int i = cur.lo; i < cur.hi; ++i) {
      const double yi = ctx.y[idx[i]];
      sum += yi;
      if (yi != y0) pure = false;
    }
    tree.node_sum[cur.node] = sum;
    tree.node_count[cur.node] = static_cast<double>(nn);

    if (pure || nn < 2 * ctx.min_node) continue;

    // candidate features, ascending so score ties resolve to the lowest index
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < ctx.mtry; ++i) {
      std::swap(pool[i], pool[i + ctx.rng.next_below(p - i)]);
    }
    std::sort(pool.begin(), pool.begin() + ctx.mtry);

    SplitChoice best;
    best.score = 0.0;  // only strictly impurity-reducing splits are accepted
    for (int c = 0; c < ctx.mtry; ++c) {
      const int f = pool[c];
      vals.clear();
      for (int i = cur.lo; i < cur.hi; ++i) {
        vals.emplace_back(ctx.X(idx[i], f), idx[i]);
      }
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;

      // impurity decrease via the mean-gap identity
      //   SSE_parent - SSE_children = T^2 / (n*cl*cr),  T = sl*cr - sr*cl.
      // T is exact integer arithmetic for integer outcomes, so an additive
      // shift of y cancels before any rounding and tree structures stay put.
      double sl = 0.0;
      for (int k = 0; k + 1 < nn; ++k) {
        sl += ctx.y[vals[k].second];
        if (vals[k].first == vals[k + 1].first) continue;
        const int cl = k + 1;
        const int cr = nn - cl;
        if (cl < ctx.min_node || cr < ctx.min_node) continue;
        const double sr = sum - sl;
        const double gap = sl * cr - sr * cl;
        const double score = gap * gap / (static_cast<double>(cl) * cr);
        if (score > best.score) {
          best.feature = f;
          best.threshold = split_point(vals[k].first, vals[k + 1].first);
          best.score = score;
        }
      }
    }
    if (best.feature < 0) continue;

    tree.feature[cur.node] = best.feature;
    tree.threshold[cur.node] = best.threshold;
    tree.split_gain[best.feature] += ctx.impurity_factor * best.score / nn;

    auto mid_it = std::stable_partition(
        idx.begin() + cur.lo, idx.begin() + cur.hi,
        [&](int i) { return ctx.X(i, best.feature) <= best.threshold; });
    const int mid = static_cast<int>(mid_it - idx.begin());

    const int l = add_node();
    const int r = add_node();
    tree.left[cur.node] = l;
    tree.right[cur.node] = r;
    stack.push_back({r, mid, cur.hi});
    stack.push_back({l, cur.lo, mid});
  }
}

std::vector<int> draw_subsample(int n, const ForestParams& params, Rng& rng) {
  int k = static_cast<int>(std::llround(params.subsample_frac * n));
  k = std::clamp(k, 1, n);
  if (!params.with_replacement) return sample_without_replacement(n, k, rng);
  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = rng.next_below(n);
  std::sort(out.begin(), out.end());
  return out;
}

void fill_inbag(Tree& tree, int n) {
  tree.inbag.assign((n + 63) / 64, 0ull);
  for (int i : tree.subsample) tree.inbag[i >> 6] |= 1ull << (i & 63);
}

}  // namespace

Forest fit_forest(const Matrix& X, const Vector& y, ForestTask task, ForestParams params,
                  std::vector<std::string> feature_names) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (y.size() != n) throw ValidationError("forest: X and y row counts differ");
  params.validate(n, p, task);
  if (!feature_names.empty() && static_cast<int>(feature_names.size()) != p) {
    throw ValidationError("forest: feature name count does not match X");
  }

  Forest f;
  f.task = task;
  f.params = params;
  f.n_train = n;
  f.p = p;
  f.feature_names = std::move(feature_names);
  f.trees.resize(params.n_trees);

  const int mtry = params.resolved_mtry(p, task);
  const int min_node = params.resolved_min_node(task);
  const double factor = task == ForestTask::classification ? 2.0 : 1.0;

  parallel_for(params.n_trees, [&](int t) {
    Rng rng(derive_seed(params.seed, 0xf0e57, static_cast<uint64_t>(t)));
    Tree& tree = f.trees[t];
    tree.subsample = draw_subsample(n, params, rng);
    fill_inbag(tree, n);
    std::vector<int> idx = tree.subsample;
    TreeBuildContext ctx{X, y, mtry, min_node, factor, rng};
    build_tree(ctx, idx, tree);
  });

  bool any_split = false;
  for (const auto& tr : f.trees) {
    if (tr.n_nodes() > 1) any_split = true;
  }
  const bool y_constant = (y.array() == y[0]).all();
  f.degenerate_warning = !any_split && !y_constant;
  return f;
}

Vector predict(const Forest& f, const Matrix& X) {
  if (static_cast<int>(X.cols()) != f.p) {
    throw ValidationError("predict: feature count mismatch");
  }
  const int n = static_cast<int>(X.rows());
  const int T = static_cast<int>(f.trees.size());
  Vector out(n);
  const Eigen::Index stride = X.outerStride();
  parallel_for(n, [&](int i) {
    const double* row = X.data() + i;
    double acc = 0.0;
    for (int t = 0; t < T; ++t) acc += f.tree_value(t, row, stride);
    out[i] = acc / T;
  });
  return out;
}

OobPrediction oob_predict(const Forest& f, const Matrix& X) {
  if (static_cast<int>(X.rows()) != f.n_train || static_cast<int>(X.cols()) != f.p) {
    throw ValidationError("oob_predict: X must be the training matrix");
  }
  const int n = f.n_train;
  const int T = static_cast<int>(f.trees.size());
  OobPrediction out;
  out.value = Vector::Zero(n);
  out.covered.assign(n, 0);
  const Eigen::Index stride = X.outerStride();
  parallel_for(n, [&](int i) {
    const double* row = X.data() + i;
    double acc = 0.0;
    int k = 0;
    for (int t = 0; t < T; ++t) {
      if (f.trees[t].in_bag(i)) continue;
      acc += f.tree_value(t, row, stride);
      ++k;
    }
    if (k > 0) {
      out.value[i] = acc / k;
      out.covered[i] = 1;
    }
  });
  for (int i = 0; i < n; ++i) {
    if (!out.covered[i]) ++out.n_uncovered;
  }
  return out;
}

OobPrediction oob_residuals(const Forest& f, const Matrix& X, const Vector& y) {
  if (static_cast<int>(X.rows()) != f.n_train || y.size() != f.n_train) {
    throw ValidationError("oob_residuals: X, y must be the training data");
  }
  const int n = f.n_train;
  const int T = static_cast<int>(f.trees.size());
  OobPrediction out;
  out.value = Vector::Zero(n);
  out.covered.assign(n, 0);
  const Eigen::Index stride = X.outerStride();
  parallel_for(n, [&](int i) {
    const double* row = X.data() + i;
    double acc = 0.0;
    int k = 0;
    for (int t = 0; t < T; ++t) {
      const Tree& tr = f.trees[t];
      if (tr.in_bag(i)) continue;
      const int leaf = tr.leaf_for(row, stride);
      // (count*y - sum)/count instead of y - sum/count: an additive shift of y
      // then cancels in exact integer arithmetic before any division happens
      acc += (tr.node_count[leaf] * y[i] - tr.node_sum[leaf]) / tr.node_count[leaf];
      ++k;
    }
    if (k > 0) {
      out.value[i] = acc / k;
      out.covered[i] = 1;
    }
  });
  for (int i = 0; i < n; ++i) {
    if (!out.covered[i]) ++out.n_uncovered;
  }
  return out;
}

ImportanceTable variable_importance(const Forest& f) {
  std::vector<double> acc(f.p, 0.0);
  for (const auto& tr : f.trees) {
    for (int j = 0; j < f.p; ++j) acc[j] += tr.split_gain[j];
  }
  const double T = static_cast<double>(f.trees.size());
  ImportanceTable table;
  for (int j = 0; j < f.p; ++j) {
    ImportanceEntry e;
    e.index = j;
    e.feature = f.feature_names.empty() ? "x" + std::to_string(j + 1) : f.feature_names[j];
    e.importance = acc[j] / T;
    table.entries.push_back(std::move(e));
  }
  std::stable_sort(table.entries.begin(), table.entries.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) {
                     return a.importance > b.importance;
                   });
  return table;
}

double classification_accuracy(const Vector& probs, const Vector& actual, double threshold) {
  if (probs.size() == 0) throw ValidationError("classification_accuracy: empty input");
  if (probs.size() != actual.size()) {
    throw ValidationError("classification_accuracy: length mismatch");
  }
  long hits = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double cls = probs[i] >= threshold ? 1.0 : 0.0;
    if (cls == actual[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

double oob_error(const Forest& f, const Matrix& X, const Vector& y) {
  const OobPrediction oob = oob_predict(f, X);
  double acc = 0.0;
  int k = 0;
  for (int i = 0; i < f.n_train; ++i) {
    if (!oob.covered[i]) continue;
    if (f.task == ForestTask::regression) {
      const double d = y[i] - oob.value[i];
      acc += d * d;
    } else {
      acc += (oob.value[i] >= 0.5 ? 1.0 : 0.0) != y[i] ? 1.0 : 0.0;
    }
    ++k;
  }
  if (k == 0) throw EstimationError("oob_error: no out-of-bag coverage");
  return acc / k;
}

ForestParams tune_forest_params(const Matrix& X, const Vector& y, ForestTask task,
                                ForestParams base) {
  const int p = static_cast<int>(X.cols());
  std::vector<int> mtry_grid{
      static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p)))),
      static_cast<int>(std::ceil(p / 3.0)), static_cast<int>(std::ceil(p / 2.0))};
  for (int& m : mtry_grid) m = std::clamp(m, 1, p);
  std::sort(mtry_grid.begin(), mtry_grid.end());
  mtry_grid.erase(std::unique(mtry_grid.begin(), mtry_grid.end()), mtry_grid.end());
  const int n = static_cast<int>(X.rows());
  std::vector<int> node_grid;
  for (int m : {5, 20, 50}) {
    if (n >= 2 * m) node_grid.push_back(m);
  }
  if (node_grid.empty()) node_grid.push_back(base.resolved_min_node(task));

  ForestParams best = base;
  double best_err = std::numeric_limits<double>::infinity();
  int cell = 0;
  for (int m : mtry_grid) {
    for (int mn : node_grid) {
      ForestParams trial = base;
      trial.mtry = m;
      trial.min_node_size = mn;
      trial.seed = derive_seed(base.seed, 0x707e, static_cast<uint64_t>(cell++));
      const Forest f = fit_forest(X, y, task, trial);
      const double err = oob_error(f, X, y);
      if (err < best_err) {
        best_err = err;
        best = trial;
        best.seed = base.seed;
      }
    }
  }
  return best;
}

namespace {
std::string hex_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_hex_double(const std::string& s) {
  return std::strtod(s.c_str(), nullptr);
}
}  // namespace

void save_forest(const Forest& f, const std::string& path) {
  std::ostringstream out;
  out << "dfx_forest 1\n";
  out << "task " << (f.task == ForestTask::regression ? "regression" : "classification")
      << "\n";
  out << "n_train " << f.n_train << "\n";
  out << "p " << f.p << "\n";
  out << "features";
  for (const auto& name : f.feature_names) out << " " << name;
  out << "\n";
  out << "params " << f.params.n_trees << " " << f.params.mtry << " "
      << f.params.min_node_size << " " << hex_double(f.params.subsample_frac) << " "
      << (f.params.with_replacement ? 1 : 0) << " " << f.params.seed << "\n";
  out << "trees " << f.trees.size() << "\n";
  for (const auto& tr : f.trees) {
    out << "tree " << tr.n_nodes() << " " << tr.subsample.size() << "\n";
    out << "sub";
    for (int i : tr.subsample) out << " " << i;
    out << "\n";
    for (int k = 0; k < tr.n_nodes(); ++k) {
      out << tr.feature[k] << " " << hex_double(tr.threshold[k]) << " " << tr.left[k]
          << " " << tr.right[k] << " " << hex_double(tr.node_sum[k]) << " "
          << hex_double(tr.node_count[k]) << "\n";
    }
    out << "gain";
    for (double g : tr.split_gain) out << " " << hex_double(g);
    out << "\n";
  }
  write_text_file(path, out.str());
}

Forest load_forest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open forest file: " + path);
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "dfx_forest" || version != 1) {
    throw ValidationError("unrecognized forest file: " + path);
  }
  Forest f;
  std::string key, task;
  in >> key >> task;
  f.task = task == "classification" ? ForestTask::classification : ForestTask::regression;
  in >> key >> f.n_train;
  in >> key >> f.p;
  std::string line;
  std::getline(in, line);  // rest of p line
  std::getline(in, line);  // features line
  {
    std::istringstream ss(line);
    std::string w;
    ss >> w;  // "features"
    while (ss >> w) f.feature_names.push_back(w);
  }
  int with_rep = 0;
  std::string frac_hex;
  in >> key >> f.params.n_trees >> f.params.mtry >> f.params.min_node_size >> frac_hex >>
      with_rep >> f.params.seed;
  f.params.subsample_frac = parse_hex_double(frac_hex);
  f.params.with_replacement = with_rep != 0;
  size_t n_trees = 0;
  in >> key >> n_trees;
  f.trees.resize(n_trees);
  for (auto& tr : f.trees) {
    int n_nodes = 0;
    size_t n_sub = 0;
    in >> key >> n_nodes >> n_sub;
    in >> key;  // "sub"
    tr.subsample.resize(n_sub);
    for (auto& i : tr.subsample) in >> i;
    fill_inbag(tr, f.n_train);
    tr.feature.resize(n_nodes);
    tr.threshold.resize(n_nodes);
    tr.left.resize(n_nodes);
    tr.right.resize(n_nodes);
    tr.node_sum.resize(n_nodes);
    tr.node_count.resize(n_nodes);
    for (int k = 0; k < n_nodes; ++k) {
      std::string thr, sum, cnt;
      in >> tr.feature[k] >> thr >> tr.left[k] >> tr.right[k] >> sum >> cnt;
      tr.threshold[k] = parse_hex_double(thr);
      tr.node_sum[k] = parse_hex_double(sum);
      tr.node_count[k] = parse_hex_double(cnt);
    }
    in >> key;  // "gain"
    tr.split_gain.resize(f.p);
    for (double& g : tr.split_gain) {
      std::string h;
      in >> h;
      g = parse_hex_double(h);
    }
  }
  if (!in) throw ValidationError("truncated forest file: " + path);
  return f;
}

}  // namespace dfx

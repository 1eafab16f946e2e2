#include "dfx/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "dfx/benchmarks.hpp"
#include "dfx/causal_forest.hpp"
#include "dfx/csv.hpp"
#include "dfx/diagnostics.hpp"
#include "dfx/dml.hpp"
#include "dfx/parallel.hpp"
#include "dfx/report.hpp"
#include "dfx/settings.hpp"
#include "dfx/simulator.hpp"
#include "dfx/stats.hpp"

namespace dfx {

namespace {

namespace fs = std::filesystem;

struct RunOptions {
  std::string data;
  std::string schema;
  std::string config;
  std::string out = "out";
  uint64_t seed = 1;
  int trees = 1000;
  int folds = 3;
  double trim = 0.01;
  double binarize_at = 0.3;
  double q_max = 0.7;
  int bootstrap = 2000;
  int threads = 0;
  int reps = 20;
  std::string estimator = "cf";
  double train_frac = 0.75;
  std::string blp_vars;  // comma list; empty: all W columns
  bool by_arm = false;
  bool tune = false;
  int oracle_draws = 400000;
  int min_node = 0;
  int mtry = 0;
};

// A config file entry beats the command-line flag, flags beat defaults; the
// manifest records the final resolution and re-runs the command bit-identically.
void apply_config_overrides(RunOptions& opt) {
  if (opt.config.empty()) return;
  const auto kv = read_kv_file(opt.config);
  auto get_str = [&](const char* key, std::string& out) {
    if (kv.count(key)) out = kv.at(key);
  };
  auto get_int = [&](const char* key, int& out) {
    if (kv.count(key)) out = static_cast<int>(std::stol(kv.at(key)));
  };
  auto get_dbl = [&](const char* key, double& out) {
    if (kv.count(key)) {
      const auto v = parse_double(kv.at(key));
      if (!v) throw ValidationError(std::string("config: bad number for ") + key);
      out = *v;
    }
  };
  get_str("data", opt.data);
  get_str("schema", opt.schema);
  get_str("out", opt.out);
  if (kv.count("seed")) opt.seed = std::stoull(kv.at("seed"));
  get_int("trees", opt.trees);
  get_int("folds", opt.folds);
  get_dbl("trim", opt.trim);
  get_dbl("binarize_at", opt.binarize_at);
  get_dbl("q_max", opt.q_max);
  get_int("bootstrap", opt.bootstrap);
  get_int("threads", opt.threads);
  get_int("reps", opt.reps);
  get_str("estimator", opt.estimator);
  get_dbl("train_frac", opt.train_frac);
  get_str("blp_vars", opt.blp_vars);
  if (kv.count("by_arm")) opt.by_arm = kv.at("by_arm") == "1" || kv.at("by_arm") == "true";
  if (kv.count("tune")) opt.tune = kv.at("tune") == "1" || kv.at("tune") == "true";
  get_int("oracle_draws", opt.oracle_draws);
  get_int("min_node", opt.min_node);
  get_int("mtry", opt.mtry);
}

EstimatorSettings to_settings(const RunOptions& opt) {
  EstimatorSettings s;
  s.trees = opt.trees;
  s.folds = opt.folds;
  s.trim_threshold = opt.trim;
  s.treatment.q_max = opt.q_max;
  s.treatment.binarize_threshold = opt.binarize_at;
  s.bootstrap_reps = opt.bootstrap;
  s.seed = opt.seed;
  s.tune = opt.tune;
  s.min_node_size = opt.min_node;
  s.mtry = opt.mtry;
  s.treatment.validate();
  return s;
}

Manifest base_manifest(const std::string& command, const RunOptions& opt) {
  Manifest m;
  m.set("command", command);
  if (!opt.data.empty()) m.set("data", opt.data);
  if (!opt.schema.empty()) m.set("schema", opt.schema);
  m.set("out", opt.out);
  m.set("seed", opt.seed);
  m.set("trees", static_cast<long>(opt.trees));
  m.set("folds", static_cast<long>(opt.folds));
  m.set("trim", opt.trim);
  m.set("binarize_at", opt.binarize_at);
  m.set("q_max", opt.q_max);
  m.set("bootstrap", static_cast<long>(opt.bootstrap));
  m.set("reps", static_cast<long>(opt.reps));
  m.set("estimator", opt.estimator);
  m.set("train_frac", opt.train_frac);
  if (!opt.blp_vars.empty()) m.set("blp_vars", opt.blp_vars);
  m.set("by_arm", std::string(opt.by_arm ? "1" : "0"));
  m.set("tune", std::string(opt.tune ? "1" : "0"));
  m.set("oracle_draws", static_cast<long>(opt.oracle_draws));
  m.set("min_node", static_cast<long>(opt.min_node));
  m.set("mtry", static_cast<long>(opt.mtry));
  return m;
}

void echo_dgp(Manifest& m, const DgpConfig& dgp) {
  const fs::path tmp = fs::path(m.get("out")) / ".dgp_echo.tmp";
  dgp.to_file(tmp.string());
  for (const auto& [k, v] : read_kv_file(tmp.string())) m.set(k, v);
  fs::remove(tmp);
}

DgpConfig load_dgp(const RunOptions& opt) {
  DgpConfig dgp;
  if (!opt.config.empty()) dgp = DgpConfig::from_file(opt.config);
  dgp.seed = opt.seed;
  dgp.validate();
  return dgp;
}

Dataset load_input(const RunOptions& opt, const EstimatorSettings& s, LoadReport* rep) {
  if (opt.data.empty() || opt.schema.empty()) {
    throw ValidationError("this command needs --data and --schema");
  }
  return load_survey(opt.data, opt.schema, s.treatment, rep);
}

Vector binarized(const Vector& d, const TreatmentSpec& spec) {
  Vector out(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) out[i] = binarize_treatment(d[i], spec);
  return out;
}

std::string cape_csv(const std::vector<CapeEstimate>& capes) {
  std::ostringstream out;
  out << "row,tau,se,p_value,significant_5,significant_10\n";
  for (size_t i = 0; i < capes.size(); ++i) {
    const auto& c = capes[i];
    out << i << "," << format_double(c.tau) << ","
        << (std::isnan(c.se) ? "NA" : format_double(c.se)) << ","
        << (std::isnan(c.p_value) ? "NA" : format_double(c.p_value)) << ","
        << (c.significant_5 ? 1 : 0) << "," << (c.significant_10 ? 1 : 0) << "\n";
  }
  return out.str();
}

struct CapeShares {
  double positive = 0.0;
  double sig5_among_positive = 0.0;
  double sig10_among_positive = 0.0;
  double sig10_among_negative = 0.0;
};

CapeShares cape_shares(const std::vector<CapeEstimate>& capes) {
  CapeShares s;
  int pos = 0, neg = 0, p5 = 0, p10 = 0, n10 = 0;
  for (const auto& c : capes) {
    if (c.tau > 0.0) {
      ++pos;
      if (c.significant_5) ++p5;
      if (c.significant_10) ++p10;
    } else {
      ++neg;
      if (c.significant_10) ++n10;
    }
  }
  const int n = static_cast<int>(capes.size());
  if (n > 0) s.positive = static_cast<double>(pos) / n;
  if (pos > 0) {
    s.sig5_among_positive = static_cast<double>(p5) / pos;
    s.sig10_among_positive = static_cast<double>(p10) / pos;
  }
  if (neg > 0) s.sig10_among_negative = static_cast<double>(n10) / neg;
  return s;
}

int cmd_simulate(const RunOptions& opt) {
  const DgpConfig dgp = load_dgp(opt);
  const SimDraw sim = simulate(dgp);
  const fs::path out(opt.out);
  write_dataset_csv(sim.observed, (out / "survey.csv").string());
  write_dataset_schema(sim.observed, (out / "survey.schema").string());
  write_matrix_csv(sim.latent, sim.latent_names, (out / "latent.csv").string());

  const OracleTruth truth = oracle_truth(dgp, opt.oracle_draws, opt.binarize_at);
  std::map<std::string, std::string> t;
  t["theta_ab"] = format_double(truth.theta_ab);
  t["theta_se"] = format_double(truth.theta_se);
  t["delta_ab_binary"] = format_double(truth.delta_ab_binary);
  t["delta_se"] = format_double(truth.delta_se);
  t["monotonicity_slope"] = format_double(truth.monotonicity_slope);
  t["monotonicity_se"] = format_double(truth.monotonicity_se);
  t["computed_by"] = truth.computed_by;
  t["draws"] = std::to_string(truth.draws);
  write_kv_file((out / "truth.txt").string(), t);

  Manifest m = base_manifest("simulate", opt);
  echo_dgp(m, dgp);
  m.write((out / "manifest.txt").string());
  std::cerr << "simulate: " << sim.n_survey << " of " << sim.n_total
            << " units surveyed; theta_ab=" << truth.theta_ab << "\n";
  return 0;
}

int cmd_estimate(const RunOptions& opt) {
  const EstimatorSettings s = to_settings(opt);
  LoadReport lrep;
  const Dataset ds = load_input(opt, s, &lrep);
  bool empty_ab = false;
  const Dataset ab = filter_always_buyers(ds, &empty_ab);
  if (empty_ab) throw ValidationError("estimate: no always buyers in the data");

  const Matrix C = ab.controls_matrix();
  const Vector y = ab.outcome();
  const Vector d = ab.treatment();
  const fs::path out(opt.out);

  std::vector<ResultRecord> records;
  std::vector<std::string> notes;
  if (lrep.total_rejected() > 0) {
    notes.push_back("ingestion rejected " + std::to_string(lrep.total_rejected()) +
                    " rows (" + std::to_string(lrep.rejected_absent_required) +
                    " absent outcome/treatment/s0, " +
                    std::to_string(lrep.rejected_treatment_range) +
                    " treatment out of range, " +
                    std::to_string(lrep.rejected_absent_covariate) + " absent covariates)");
  }
  bool failed = false;

  // causal forest, continuous treatment
  try {
    EstimatorSettings cs = s;
    if (s.tune) {
      ForestParams tuned = tune_forest_params(C, y, ForestTask::regression,
                                              s.forest_params(0x7e57));
      cs.mtry = tuned.mtry;
      cs.min_node_size = tuned.min_node_size;
    }
    const CausalPipeline pipe =
        fit_causal_pipeline(C, y, d, cs.causal_params(0xe01), ab.control_names());
    const DrScores scores = doubly_robust_scores(pipe.cf);
    const ApeEstimate ape = ape_from_scores(scores);
    ResultRecord r{"cf_ape", ape.theta, ape.se, ape.p_value, ape.n,
                   static_cast<long>(ab.n() - ape.n),
                   std::numeric_limits<double>::quiet_NaN(), ""};
    if (ape.small_sample_warning) r.note = "n below 30, asymptotics unreliable";
    records.push_back(r);

    const auto capes = estimate_cape_all(pipe.cf, pipe.cf.X);
    write_text_file((out / "cape.csv").string(), cape_csv(capes));
    Vector taus(static_cast<Eigen::Index>(capes.size()));
    for (size_t i = 0; i < capes.size(); ++i) taus[static_cast<Eigen::Index>(i)] = capes[i].tau;
    write_histogram_csv((out / "cape_hist.csv").string(), make_histogram(taus, 30));
  } catch (const std::exception& e) {
    notes.push_back(std::string("cf_ape failed: ") + e.what());
    failed = true;
  }

  // double machine learning, binarized treatment
  try {
    const Vector dt = binarized(d, s.treatment);
    const NuisanceEstimates nui =
        crossfit_nuisances(C, y, dt, s.folds, s.nuisance_params(0xe02), s.seed);
    const auto kept = trim(nui.p1, s.trim_threshold);
    Vector sc(static_cast<Eigen::Index>(kept.size()));
    for (size_t r = 0; r < kept.size(); ++r) {
      const int i = kept[r];
      sc[static_cast<Eigen::Index>(r)] = dr_score(y[i], dt[i], nui.mu0[i], nui.mu1[i], nui.p1[i]);
    }
    const DrAteResult res =
        estimate_ate(sc, static_cast<int>(ab.n() - kept.size()), s.trim_threshold);
    records.push_back({"dml_ate", res.ate, res.se, res.p_value, res.n_used, res.n_trimmed,
                       res.threshold, ""});
    const PropensityHistograms ph = propensity_histograms(nui.p1, dt);
    write_text_file((out / "propensity_hist.csv").string(),
                    arm_histogram_csv(ph.bins.treated, ph.bins.control, ph.n_bins));
  } catch (const std::exception& e) {
    notes.push_back(std::string("dml_ate failed: ") + e.what());
    failed = true;
  }

  // linear regression benchmark, continuous treatment
  try {
    Matrix design(ab.n(), 2 + C.cols());
    design.col(0) = Vector::Ones(ab.n());
    design.col(1) = d;
    design.rightCols(C.cols()) = C;
    const OlsFit fit = ols(y, design);
    records.push_back({"ols_d", fit.coef[1], fit.se[1], fit.p_values[1], ab.n(), 0,
                       std::numeric_limits<double>::quiet_NaN(),
                       fit.dropped.empty() ? "" : "rank-deficient columns dropped"});
  } catch (const std::exception& e) {
    notes.push_back(std::string("ols_d failed: ") + e.what());
    failed = true;
  }

  // propensity-score matching benchmark, binarized treatment
  try {
    const Vector dt = binarized(d, s.treatment);
    const Matrix design = with_intercept(C);
    const ProbitFit pf = probit_fit(dt, design);
    const Vector ps = probit_predict(pf.coef, design);
    const double ate = psm_ate(y, dt, ps);
    const PsmBootstrap boot = bootstrap_psm(y, dt, design, s.bootstrap_reps, s.seed, ate);
    ResultRecord r{"psm_ate", ate, boot.se, boot.p_value, ab.n(), 0,
                   std::numeric_limits<double>::quiet_NaN(), ""};
    if (pf.separation_flag) r.note = "probit separation flagged";
    records.push_back(r);
  } catch (const std::exception& e) {
    notes.push_back(std::string("psm_ate failed: ") + e.what());
    failed = true;
  }

  write_results_csv((out / "results.csv").string(), records);
  if (!notes.empty()) {
    std::string joined;
    for (const auto& n : notes) joined += n + "\n";
    write_text_file((out / "notes.txt").string(), joined);
  }
  Manifest m = base_manifest("estimate", opt);
  m.write((out / "manifest.txt").string());
  return failed ? 3 : 0;
}

int cmd_diagnose(const RunOptions& opt) {
  const EstimatorSettings s = to_settings(opt);
  const Dataset ds = load_input(opt, s, nullptr);
  const fs::path out(opt.out);
  bool failed = false;
  std::vector<std::string> notes;

  try {
    const MonotonicityReport rep = monotonicity_tests(ds, s);
    std::vector<ResultRecord> rows;
    const double na = std::numeric_limits<double>::quiet_NaN();
    rows.push_back({rep.cf.method, rep.cf.effect, rep.cf.se, rep.cf.p_value, rep.cf.n, 0, na, ""});
    rows.push_back({rep.lr.method, rep.lr.effect, rep.lr.se, rep.lr.p_value, rep.lr.n, 0, na, ""});
    rows.push_back({rep.dml.method, rep.dml.effect, rep.dml.se, rep.dml.p_value, rep.dml.n,
                    rep.dml.n_trimmed, s.trim_threshold, ""});
    write_results_csv((out / "monotonicity.csv").string(), rows);
    write_histogram_csv((out / "mono_hist.csv").string(), rep.hist);
    std::ostringstream sm;
    sm << "share_positive,share_significant_10,share_significant_5,violation_flag\n"
       << format_double(rep.share_positive) << "," << format_double(rep.share_significant_10)
       << "," << format_double(rep.share_significant_5) << "," << (rep.violation_flag ? 1 : 0)
       << "\n";
    write_text_file((out / "mono_summary.csv").string(), sm.str());
    notes.push_back(
        "conditional-change standard errors use the grouped-tree (half-sample group) "
        "variance of the causal forest");
    if (rep.violation_flag) notes.push_back("monotonicity violation flagged");
  } catch (const std::exception& e) {
    notes.push_back(std::string("monotonicity_tests failed: ") + e.what());
    failed = true;
  }

  try {
    bool empty_ab = false;
    const Dataset ab = filter_always_buyers(ds, &empty_ab);
    if (empty_ab) throw ValidationError("no always buyers");
    const WaldIndependenceTable wald = independence_wald(ab);
    std::ostringstream wt;
    wt << "variable,coefficient,p_value,df,skipped_collinear\n";
    for (const auto& e : wald.entries) {
      wt << e.variable << "," << format_double(e.coefficient) << ","
         << format_double(e.p_value) << "," << e.df << "," << (e.skipped_collinear ? 1 : 0)
         << "\n";
    }
    wt << "average," << "NA," << format_double(wald.average_p) << ",0,0\n";
    write_text_file((out / "wald.csv").string(), wt.str());
    notes.push_back(wald.caveat);
  } catch (const std::exception& e) {
    notes.push_back(std::string("independence_wald failed: ") + e.what());
    failed = true;
  }

  if (!notes.empty()) {
    std::string joined;
    for (const auto& n : notes) joined += n + "\n";
    write_text_file((out / "notes.txt").string(), joined);
  }
  Manifest m = base_manifest("diagnose", opt);
  m.write((out / "manifest.txt").string());
  return failed ? 3 : 0;
}

struct PredictTask {
  std::string name;
  Vector outcome;
  std::vector<std::string> drop_sources;
};

int cmd_predict(const RunOptions& opt) {
  const EstimatorSettings s = to_settings(opt);
  const Dataset ds = load_input(opt, s, nullptr);
  const fs::path out(opt.out);

  std::vector<PredictTask> tasks;
  tasks.push_back({ds.outcome_name(), ds.outcome(), {}});
  if (ds.has_column("upselling") && ds.outcome_name() != "upselling") {
    // the chosen class and its seat capacity are part of this outcome
    tasks.push_back({"upselling", ds.col("upselling"), {"class", "seat_capacity"}});
  }
  tasks.push_back({"additional_trip", Vector(Vector::Ones(ds.n()) - ds.s0()), {}});

  // predictors: D plus X plus W
  std::vector<int> pred_idx;
  {
    const auto t = ds.role_indices(ColumnRole::treatment);
    const auto x = ds.role_indices(ColumnRole::x);
    const auto w = ds.role_indices(ColumnRole::w);
    pred_idx.insert(pred_idx.end(), t.begin(), t.end());
    pred_idx.insert(pred_idx.end(), x.begin(), x.end());
    pred_idx.insert(pred_idx.end(), w.begin(), w.end());
  }

  std::ostringstream acc;
  acc << "outcome,subset,n_balanced,n_train,n_test,accuracy\n";
  std::vector<std::string> notes;
  bool failed = false;

  const Vector dt_all = binarized(ds.treatment(), s.treatment);

  auto run_task = [&](const PredictTask& task, const std::vector<int>& rows,
                      const std::string& subset) {
    Dataset sub = ds.subset(rows);
    // attach the outcome under a reserved name so balancing can see it
    Dataset work = sub;
    work.values.conservativeResize(Eigen::NoChange, work.values.cols() + 1);
    Vector yv(static_cast<Eigen::Index>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) yv[static_cast<Eigen::Index>(i)] = task.outcome[rows[i]];
    work.values.col(work.values.cols() - 1) = yv;
    work.columns.push_back({"__predict_outcome", ColumnKind::binary, ColumnRole::ignore,
                            "__predict_outcome"});

    const Dataset balanced = balance_binary_outcome(work, "__predict_outcome",
                                                    derive_seed(s.seed, 0xba1, rows.size()));
    const auto [train, test] =
        train_test_split(balanced, opt.train_frac, derive_seed(s.seed, 0x5c1, rows.size()));

    std::vector<int> use_idx;
    std::vector<std::string> names;
    for (int j : pred_idx) {
      const auto& info = ds.columns[j];
      bool dropped = false;
      for (const auto& src : task.drop_sources) {
        if (info.source == src || info.name == src) dropped = true;
      }
      if (!dropped) {
        use_idx.push_back(j);
        names.push_back(info.name);
      }
    }
    const Matrix Xtr = train.matrix_of(use_idx);
    const Vector ytr = train.col("__predict_outcome");
    if ((ytr.array() == ytr[0]).all()) {
      throw EstimationError("outcome constant after balancing: " + task.name);
    }
    ForestParams fp = s.forest_params(0x9e0 + rows.size());
    if (s.tune) fp = tune_forest_params(Xtr, ytr, ForestTask::classification, fp);
    const Forest f = fit_forest(Xtr, ytr, ForestTask::classification, fp, names);
    const Vector probs = predict(f, test.matrix_of(use_idx));
    const double accuracy = classification_accuracy(probs, test.col("__predict_outcome"));
    acc << task.name << "," << subset << "," << balanced.n() << "," << train.n() << ","
        << test.n() << "," << format_double(accuracy) << "\n";
    const std::string suffix = subset == "all" ? "" : "_" + subset;
    write_importance_csv((out / ("importance_" + task.name + suffix + ".csv")).string(),
                         variable_importance(f), 30);
  };

  std::vector<int> all_rows(ds.n());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  for (const auto& task : tasks) {
    try {
      run_task(task, all_rows, "all");
      if (opt.by_arm) {
        std::vector<int> arm1, arm0;
        for (int i = 0; i < ds.n(); ++i) (dt_all[i] == 1.0 ? arm1 : arm0).push_back(i);
        run_task(task, arm1, "arm1");
        run_task(task, arm0, "arm0");
      }
    } catch (const std::exception& e) {
      notes.push_back(std::string("predict ") + task.name + " failed: " + e.what());
      failed = true;
    }
  }

  write_text_file((out / "predict_accuracy.csv").string(), acc.str());
  if (!notes.empty()) {
    std::string joined;
    for (const auto& n : notes) joined += n + "\n";
    write_text_file((out / "notes.txt").string(), joined);
  }
  Manifest m = base_manifest("predict", opt);
  m.write((out / "manifest.txt").string());
  return failed ? 3 : 0;
}

int cmd_heterogeneity(const RunOptions& opt) {
  const EstimatorSettings s = to_settings(opt);
  const Dataset ds = load_input(opt, s, nullptr);
  bool empty_ab = false;
  const Dataset ab = filter_always_buyers(ds, &empty_ab);
  if (empty_ab) throw ValidationError("heterogeneity: no always buyers in the data");
  const fs::path out(opt.out);

  const Matrix C = ab.controls_matrix();
  const Vector y = ab.outcome();
  const Vector d = ab.treatment();

  const CausalPipeline pipe =
      fit_causal_pipeline(C, y, d, s.causal_params(0xe71), ab.control_names());
  const DrScores scores = doubly_robust_scores(pipe.cf);
  const ApeEstimate ape = ape_from_scores(scores);

  std::vector<ResultRecord> records;
  records.push_back({"cf_ape", ape.theta, ape.se, ape.p_value, ape.n, 0,
                     std::numeric_limits<double>::quiet_NaN(), ""});
  write_results_csv((out / "results.csv").string(), records);

  // (a) CAPE distribution and significance shares
  const auto capes = estimate_cape_all(pipe.cf, pipe.cf.X);
  write_text_file((out / "cape.csv").string(), cape_csv(capes));
  Vector taus(static_cast<Eigen::Index>(capes.size()));
  for (size_t i = 0; i < capes.size(); ++i) taus[static_cast<Eigen::Index>(i)] = capes[i].tau;
  write_histogram_csv((out / "cape_hist.csv").string(), make_histogram(taus, 30));
  const CapeShares sh = cape_shares(capes);
  std::ostringstream shcsv;
  shcsv << "share_positive,sig5_among_positive,sig10_among_positive,sig10_among_negative\n"
        << format_double(sh.positive) << "," << format_double(sh.sig5_among_positive) << ","
        << format_double(sh.sig10_among_positive) << ","
        << format_double(sh.sig10_among_negative) << "\n";
  write_text_file((out / "cape_shares.csv").string(), shcsv.str());

  // (b) which covariates predict the CAPE
  ForestParams fp = s.forest_params(0xe72);
  const Forest cape_forest =
      fit_forest(pipe.cf.X, taus, ForestTask::regression, fp, ab.control_names());
  write_importance_csv((out / "cape_importance.csv").string(),
                       variable_importance(cape_forest), 20);

  // (c) best linear predictors on the doubly robust scores
  Vector sc(scores.n_kept);
  std::vector<int> kept_rows;
  {
    int k = 0;
    for (Eigen::Index i = 0; i < scores.scores.size(); ++i) {
      if (scores.kept[i]) {
        sc[k++] = scores.scores[i];
        kept_rows.push_back(pipe.kept_rows[static_cast<int>(i)]);
      }
    }
  }
  const Vector dt = binarized(d, s.treatment);
  {
    Matrix basis(scores.n_kept, 2);
    for (int r = 0; r < scores.n_kept; ++r) {
      basis(r, 0) = 1.0;
      basis(r, 1) = dt[kept_rows[r]];
    }
    const BlpReport rep = blp_heterogeneity(sc, basis, {"constant", "dtilde"});
    std::ostringstream bl;
    bl << "term,coefficient,se,p_value\n";
    for (size_t j = 0; j < rep.names.size(); ++j) {
      bl << rep.names[j] << "," << format_double(rep.coef[static_cast<Eigen::Index>(j)]) << ","
         << format_double(rep.se[static_cast<Eigen::Index>(j)]) << ","
         << format_double(rep.p_values[static_cast<Eigen::Index>(j)]) << "\n";
    }
    write_text_file((out / "blp_discount.csv").string(), bl.str());
  }
  {
    std::vector<std::string> vars;
    if (!opt.blp_vars.empty()) {
      std::stringstream ss(opt.blp_vars);
      std::string item;
      while (std::getline(ss, item, ',')) vars.push_back(trim(item));
    } else {
      vars = ab.w_names();
    }
    if (!vars.empty()) {
      Matrix basis(scores.n_kept, 1 + static_cast<Eigen::Index>(vars.size()));
      std::vector<std::string> names{"constant"};
      basis.col(0) = Vector::Ones(scores.n_kept);
      for (size_t j = 0; j < vars.size(); ++j) {
        const Vector colv = ab.col(vars[j]);
        for (int r = 0; r < scores.n_kept; ++r) {
          basis(r, 1 + static_cast<Eigen::Index>(j)) = colv[kept_rows[r]];
        }
        names.push_back(vars[j]);
      }
      const BlpReport rep = blp_heterogeneity(sc, basis, names);
      std::ostringstream bl;
      bl << "term,coefficient,se,p_value\n";
      for (size_t j = 0; j < rep.names.size(); ++j) {
        bl << rep.names[j] << "," << format_double(rep.coef[static_cast<Eigen::Index>(j)]) << ","
           << format_double(rep.se[static_cast<Eigen::Index>(j)]) << ","
           << format_double(rep.p_values[static_cast<Eigen::Index>(j)]) << "\n";
      }
      write_text_file((out / "blp_characteristics.csv").string(), bl.str());
    }
  }

  Manifest m = base_manifest("heterogeneity", opt);
  m.write((out / "manifest.txt").string());
  return 0;
}

int cmd_mc_study(const RunOptions& opt) {
  const EstimatorSettings s = to_settings(opt);
  const DgpConfig dgp = load_dgp(opt);
  McEstimator est;
  if (opt.estimator == "cf") {
    est = McEstimator::cf_ape;
  } else if (opt.estimator == "dml") {
    est = McEstimator::dml_ate;
  } else if (opt.estimator == "ols") {
    est = McEstimator::ols;
  } else if (opt.estimator == "psm") {
    est = McEstimator::psm;
  } else {
    throw ValidationError("unknown estimator: " + opt.estimator +
                          " (expected cf, dml, ols or psm)");
  }
  const McSummary sum = monte_carlo_study(dgp, opt.reps, est, s, opt.oracle_draws);

  const fs::path out(opt.out);
  std::ostringstream ss;
  ss << "estimator,truth,bias,rmse,coverage,mean_se,reps_ok,reps_failed\n";
  ss << sum.estimator << "," << format_double(sum.truth) << "," << format_double(sum.bias)
     << "," << format_double(sum.rmse) << "," << format_double(sum.coverage) << ","
     << format_double(sum.mean_se) << "," << sum.reps_ok << "," << sum.reps_failed << "\n";
  write_text_file((out / "mc_summary.csv").string(), ss.str());

  std::ostringstream rr;
  rr << "rep,estimate,se,ok,error\n";
  for (size_t r = 0; r < sum.reps.size(); ++r) {
    const auto& rep = sum.reps[r];
    rr << r << "," << format_double(rep.estimate) << "," << format_double(rep.se) << ","
       << (rep.ok ? 1 : 0) << "," << rep.error << "\n";
  }
  write_text_file((out / "mc_reps.csv").string(), rr.str());

  Manifest m = base_manifest("mc-study", opt);
  echo_dgp(m, dgp);
  m.write((out / "manifest.txt").string());
  return sum.reps_failed > 0 ? 3 : 0;
}

void add_common_options(CLI::App* sub, RunOptions& opt) {
  sub->add_option("--data", opt.data, "survey CSV");
  sub->add_option("--schema", opt.schema, "column-role schema file");
  sub->add_option("--config", opt.config, "key=value config; overrides flags");
  sub->add_option("--seed", opt.seed, "master seed");
  sub->add_option("--out", opt.out, "output directory");
  sub->add_option("--trees", opt.trees, "trees per forest");
  sub->add_option("--folds", opt.folds, "cross-fitting folds");
  sub->add_option("--trim", opt.trim, "propensity trimming threshold");
  sub->add_option("--binarize-at", opt.binarize_at, "binary treatment cut");
  sub->add_option("--q-max", opt.q_max, "maximum discount");
  sub->add_option("--bootstrap", opt.bootstrap, "bootstrap replicates for matching");
  sub->add_option("--threads", opt.threads, "worker threads (0 = hardware)");
  sub->add_option("--oracle-draws", opt.oracle_draws, "Monte Carlo draws for the oracle");
  sub->add_option("--min-node", opt.min_node, "minimum node size (0 = task default)");
  sub->add_option("--mtry", opt.mtry, "split candidates per node (0 = task default)");
  sub->add_flag("--tune", opt.tune, "grid-search forest parameters on OOB error");
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"discountfx: causal demand effects of rail-ticket discounts"};
  app.require_subcommand(1);

  RunOptions opt;
  auto* c_sim = app.add_subcommand("simulate", "draw a synthetic survey with known truth");
  add_common_options(c_sim, opt);
  auto* c_est = app.add_subcommand("estimate", "CF, DML, OLS and matching on always buyers");
  add_common_options(c_est, opt);
  auto* c_diag = app.add_subcommand("diagnose", "monotonicity and W-independence tests");
  add_common_options(c_diag, opt);
  auto* c_pred = app.add_subcommand("predict", "balanced predictive analysis per outcome");
  add_common_options(c_pred, opt);
  c_pred->add_option("--train-frac", opt.train_frac, "training share of the split");
  c_pred->add_flag("--by-arm", opt.by_arm, "also run within each discount category");
  auto* c_het = app.add_subcommand("heterogeneity", "CAPE distribution, importance, BLP");
  add_common_options(c_het, opt);
  c_het->add_option("--blp-vars", opt.blp_vars, "comma list of BLP covariates");
  auto* c_mc = app.add_subcommand("mc-study", "bias/RMSE/coverage over simulator reps");
  add_common_options(c_mc, opt);
  c_mc->add_option("--reps", opt.reps, "Monte Carlo repetitions");
  c_mc->add_option("--estimator", opt.estimator, "cf, dml, ols or psm");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help() << std::endl;
      return 0;
    }
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    apply_config_overrides(opt);
    set_max_threads(opt.threads);
    std::filesystem::create_directories(opt.out);
    if (app.got_subcommand(c_sim)) return cmd_simulate(opt);
    if (app.got_subcommand(c_est)) return cmd_estimate(opt);
    if (app.got_subcommand(c_diag)) return cmd_diagnose(opt);
    if (app.got_subcommand(c_pred)) return cmd_predict(opt);
    if (app.got_subcommand(c_het)) return cmd_heterogeneity(opt);
    if (app.got_subcommand(c_mc)) return cmd_mc_study(opt);
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace dfx

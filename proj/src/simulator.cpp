#include "dfx/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dfx/benchmarks.hpp"
#include "dfx/csv.hpp"
#include "dfx/dml.hpp"
#include "dfx/parallel.hpp"
#include "dfx/rng.hpp"
#include "dfx/stats.hpp"

namespace dfx {

namespace {

constexpr uint64_t kSaltX = 0x5101;
constexpr uint64_t kSaltW = 0x5102;
constexpr uint64_t kSaltV = 0x5103;
constexpr uint64_t kSaltEpsD = 0x5104;
constexpr uint64_t kSaltUy = 0x5105;
constexpr uint64_t kSaltUp = 0x5106;
constexpr uint64_t kSaltOracle = 0x5107;
constexpr uint64_t kSaltMcRep = 0x5108;

double dot_or_zero(const std::vector<double>& coef, const Vector& v) {
  double acc = 0.0;
  const size_t k = std::min(coef.size(), static_cast<size_t>(v.size()));
  for (size_t j = 0; j < k; ++j) acc += coef[j] * v[static_cast<Eigen::Index>(j)];
  return acc;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = parse_double(item);
    if (!v) throw ValidationError("bad numeric list entry: " + item);
    out.push_back(*v);
  }
  return out;
}

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v[i]);
  }
  return out;
}

}  // namespace

void DgpConfig::validate() const {
  if (n < 1) throw ValidationError("dgp: n must be positive");
  if (p_x < 1 || p_w < 0) throw ValidationError("dgp: bad covariate counts");
  if (x_binary < 0 || x_binary > p_x || w_binary < 0 || w_binary > p_w) {
    throw ValidationError("dgp: binary column counts out of range");
  }
  if (!(q_max > 0.0 && q_max <= 1.0)) throw ValidationError("dgp: q_max must lie in (0, 1]");
  if (!(discount_floor > 0.0 && discount_floor < q_max)) {
    throw ValidationError("dgp: discount_floor must lie in (0, q_max)");
  }
  if (sel_slope < 0.0 || sel_jump < 0.0) {
    throw ValidationError("dgp: sel_slope and sel_jump must be nonnegative (monotone selection)");
  }
  if (!(sel_noise > 0.0)) throw ValidationError("dgp: sel_noise must be positive");
  if (q_lo < 0.0 || q_hi < q_lo) throw ValidationError("dgp: bad outcome slope range");
  if (discount_noise < 0.0) throw ValidationError("dgp: discount_noise must be nonnegative");
  if (static_cast<int>(discount_x.size()) > p_x || static_cast<int>(sel_x.size()) > p_x ||
      static_cast<int>(q_x.size()) > p_x || static_cast<int>(upsell_x.size()) > p_x ||
      static_cast<int>(sel_w.size()) > p_w) {
    throw ValidationError("dgp: coefficient list longer than covariate count");
  }
}

DgpConfig DgpConfig::from_file(const std::string& path) {
  const auto kv = read_kv_file(path);
  DgpConfig c;
  auto get_int = [&](const char* key, int& out) {
    if (kv.count(key)) out = static_cast<int>(std::stol(kv.at(key)));
  };
  auto get_double = [&](const char* key, double& out) {
    if (kv.count(key)) {
      const auto v = parse_double(kv.at(key));
      if (!v) throw ValidationError(std::string("dgp config: bad number for ") + key);
      out = *v;
    }
  };
  auto get_list = [&](const char* key, std::vector<double>& out) {
    if (kv.count(key)) out = parse_list(kv.at(key));
  };
  get_int("n", c.n);
  get_int("p_x", c.p_x);
  get_int("p_w", c.p_w);
  get_int("x_binary", c.x_binary);
  get_int("w_binary", c.w_binary);
  get_double("q_max", c.q_max);
  get_double("discount_base", c.discount_base);
  get_list("discount_x", c.discount_x);
  get_double("discount_noise", c.discount_noise);
  get_double("discount_floor", c.discount_floor);
  get_double("sel_base", c.sel_base);
  get_list("sel_x", c.sel_x);
  get_list("sel_w", c.sel_w);
  get_double("sel_slope", c.sel_slope);
  get_double("sel_jump", c.sel_jump);
  get_double("sel_noise", c.sel_noise);
  get_double("q_base", c.q_base);
  get_list("q_x", c.q_x);
  get_double("q_lo", c.q_lo);
  get_double("q_hi", c.q_hi);
  get_double("v_loading", c.v_loading);
  get_double("upsell_base", c.upsell_base);
  get_list("upsell_x", c.upsell_x);
  get_double("upsell_d", c.upsell_d);
  if (kv.count("seed")) c.seed = std::stoull(kv.at("seed"));
  c.validate();
  return c;
}

void DgpConfig::to_file(const std::string& path) const {
  std::map<std::string, std::string> kv;
  kv["n"] = std::to_string(n);
  kv["p_x"] = std::to_string(p_x);
  kv["p_w"] = std::to_string(p_w);
  kv["x_binary"] = std::to_string(x_binary);
  kv["w_binary"] = std::to_string(w_binary);
  kv["q_max"] = format_double(q_max);
  kv["discount_base"] = format_double(discount_base);
  kv["discount_x"] = format_list(discount_x);
  kv["discount_noise"] = format_double(discount_noise);
  kv["discount_floor"] = format_double(discount_floor);
  kv["sel_base"] = format_double(sel_base);
  kv["sel_x"] = format_list(sel_x);
  kv["sel_w"] = format_list(sel_w);
  kv["sel_slope"] = format_double(sel_slope);
  kv["sel_jump"] = format_double(sel_jump);
  kv["sel_noise"] = format_double(sel_noise);
  kv["q_base"] = format_double(q_base);
  kv["q_x"] = format_list(q_x);
  kv["q_lo"] = format_double(q_lo);
  kv["q_hi"] = format_double(q_hi);
  kv["v_loading"] = format_double(v_loading);
  kv["upsell_base"] = format_double(upsell_base);
  kv["upsell_x"] = format_list(upsell_x);
  kv["upsell_d"] = format_double(upsell_d);
  kv["seed"] = std::to_string(seed);
  write_kv_file(path, kv);
}

double oracle_q(const DgpConfig& cfg, const Vector& x) {
  return std::clamp(cfg.q_base + dot_or_zero(cfg.q_x, x), cfg.q_lo, cfg.q_hi);
}

double oracle_selection_index(const DgpConfig& cfg, const Vector& x, const Vector& w) {
  return cfg.sel_base + dot_or_zero(cfg.sel_x, x) + dot_or_zero(cfg.sel_w, w);
}

int SimDraw::latent_col(const std::string& name) const {
  for (size_t j = 0; j < latent_names.size(); ++j) {
    if (latent_names[j] == name) return static_cast<int>(j);
  }
  throw ValidationError("no such latent column: " + name);
}

SimDraw simulate_with_seed(const DgpConfig& cfg_in, uint64_t seed) {
  DgpConfig cfg = cfg_in;
  cfg.seed = seed;
  return simulate(cfg);
}

SimDraw simulate(const DgpConfig& cfg) {
  cfg.validate();
  const int n = cfg.n;

  Matrix X(n, cfg.p_x);
  for (int j = 0; j < cfg.p_x; ++j) {
    Rng rng(derive_seed(cfg.seed, kSaltX, static_cast<uint64_t>(j)));
    const bool binary = j >= cfg.p_x - cfg.x_binary;
    for (int i = 0; i < n; ++i) {
      X(i, j) = binary ? (rng.next_double() < 0.5 ? 1.0 : 0.0) : rng.next_normal();
    }
  }
  Matrix W(n, std::max(cfg.p_w, 0));
  for (int j = 0; j < cfg.p_w; ++j) {
    Rng rng(derive_seed(cfg.seed, kSaltW, static_cast<uint64_t>(j)));
    const bool binary = j >= cfg.p_w - cfg.w_binary;
    for (int i = 0; i < n; ++i) {
      W(i, j) = binary ? (rng.next_double() < 0.5 ? 1.0 : 0.0) : rng.next_normal();
    }
  }

  Rng rng_v(derive_seed(cfg.seed, kSaltV));
  Rng rng_eps(derive_seed(cfg.seed, kSaltEpsD));
  Rng rng_uy(derive_seed(cfg.seed, kSaltUy));
  Rng rng_up(derive_seed(cfg.seed, kSaltUp));

  Vector v(n), d(n), alpha(n), q(n), slope(n), u_y(n);
  Vector y(n), s0(n), s(n), upsell(n);
  for (int i = 0; i < n; ++i) {
    const Vector xi = X.row(i).transpose();
    const Vector wi = cfg.p_w > 0 ? Vector(W.row(i).transpose()) : Vector(0);
    v[i] = rng_v.next_normal();
    d[i] = std::clamp(cfg.discount_base + dot_or_zero(cfg.discount_x, xi) +
                          cfg.discount_noise * rng_eps.next_normal(),
                      cfg.discount_floor, cfg.q_max);
    alpha[i] = oracle_selection_index(cfg, xi, wi);
    s0[i] = alpha[i] + cfg.sel_noise * v[i] >= 0.0 ? 1.0 : 0.0;
    s[i] = alpha[i] + cfg.sel_jump + cfg.sel_slope * d[i] + cfg.sel_noise * v[i] >= 0.0
               ? 1.0
               : 0.0;
    q[i] = oracle_q(cfg, xi);
    const double raw = q[i] + cfg.v_loading * v[i];
    const double p_y = std::clamp(raw * d[i], 0.0, 1.0);
    u_y[i] = rng_uy.next_double();
    y[i] = u_y[i] < p_y ? 1.0 : 0.0;
    slope[i] = (raw > 0.0 && raw * d[i] < 1.0) ? raw : 0.0;
    const double p_up =
        norm_cdf(cfg.upsell_base + dot_or_zero(cfg.upsell_x, xi) + cfg.upsell_d * d[i]);
    upsell[i] = rng_up.next_double() < p_up ? 1.0 : 0.0;
  }

  // observed survey: S = 1 rows, schema-compatible columns
  std::vector<int> survey;
  for (int i = 0; i < n; ++i) {
    if (s[i] == 1.0) survey.push_back(i);
  }
  if (static_cast<int>(survey.size()) < 100) {
    throw ValidationError("simulate: fewer than 100 surveyed units; adjust the config");
  }

  SimDraw out;
  out.n_total = n;
  out.n_survey = static_cast<int>(survey.size());

  Dataset ds;
  ds.provenance = Provenance::simulated;
  ds.columns.push_back({"demand_shift", ColumnKind::binary, ColumnRole::outcome, "demand_shift"});
  ds.columns.push_back({"upselling", ColumnKind::binary, ColumnRole::outcome, "upselling"});
  ds.columns.push_back({"discount", ColumnKind::continuous, ColumnRole::treatment, "discount"});
  ds.columns.push_back({"would_buy", ColumnKind::binary, ColumnRole::s0, "would_buy"});
  for (int j = 0; j < cfg.p_x; ++j) {
    const bool binary = j >= cfg.p_x - cfg.x_binary;
    const std::string name = "x" + std::to_string(j + 1);
    ds.columns.push_back(
        {name, binary ? ColumnKind::binary : ColumnKind::continuous, ColumnRole::x, name});
  }
  for (int j = 0; j < cfg.p_w; ++j) {
    const bool binary = j >= cfg.p_w - cfg.w_binary;
    const std::string name = "w" + std::to_string(j + 1);
    ds.columns.push_back(
        {name, binary ? ColumnKind::binary : ColumnKind::continuous, ColumnRole::w, name});
  }
  ds.values.resize(static_cast<Eigen::Index>(survey.size()), static_cast<Eigen::Index>(ds.columns.size()));
  for (size_t r = 0; r < survey.size(); ++r) {
    const int i = survey[r];
    Eigen::Index c = 0;
    ds.values(r, c++) = y[i];
    ds.values(r, c++) = upsell[i];
    ds.values(r, c++) = d[i];
    ds.values(r, c++) = s0[i];
    for (int j = 0; j < cfg.p_x; ++j) ds.values(r, c++) = X(i, j);
    for (int j = 0; j < cfg.p_w; ++j) ds.values(r, c++) = W(i, j);
  }
  ds.validate();
  out.observed = std::move(ds);

  // full latent table
  out.latent_names = {"demand_shift", "upselling", "discount", "would_buy"};
  for (int j = 0; j < cfg.p_x; ++j) out.latent_names.push_back("x" + std::to_string(j + 1));
  for (int j = 0; j < cfg.p_w; ++j) out.latent_names.push_back("w" + std::to_string(j + 1));
  for (const char* nm : {"latent_v", "latent_sel_index", "latent_s0", "latent_s",
                         "latent_q", "latent_slope", "latent_u_outcome"}) {
    out.latent_names.push_back(nm);
  }
  out.latent.resize(n, static_cast<Eigen::Index>(out.latent_names.size()));
  for (int i = 0; i < n; ++i) {
    Eigen::Index c = 0;
    out.latent(i, c++) = y[i];
    out.latent(i, c++) = upsell[i];
    out.latent(i, c++) = d[i];
    out.latent(i, c++) = s0[i];
    for (int j = 0; j < cfg.p_x; ++j) out.latent(i, c++) = X(i, j);
    for (int j = 0; j < cfg.p_w; ++j) out.latent(i, c++) = W(i, j);
    out.latent(i, c++) = v[i];
    out.latent(i, c++) = alpha[i];
    out.latent(i, c++) = s0[i];
    out.latent(i, c++) = s[i];
    out.latent(i, c++) = q[i];
    out.latent(i, c++) = slope[i];
    out.latent(i, c++) = u_y[i];
  }
  return out;
}

double oracle_propensity_binary(const DgpConfig& cfg, const Vector& x, double threshold) {
  if (!(threshold > cfg.discount_floor && threshold <= cfg.q_max)) {
    throw ValidationError("oracle_propensity_binary: threshold outside the discount range");
  }
  const double g = cfg.discount_base + dot_or_zero(cfg.discount_x, x);
  if (cfg.discount_noise == 0.0) return g >= threshold ? 1.0 : 0.0;
  return norm_cdf((g - threshold) / cfg.discount_noise);
}

namespace {
// E[z phi((z-g)/s)/s] over [a, b]
double truncated_normal_mass_mean(double g, double s, double a, double b) {
  const double za = (a - g) / s;
  const double zb = (b - g) / s;
  return g * (norm_cdf(zb) - norm_cdf(za)) - s * (norm_pdf(zb) - norm_pdf(za));
}
}  // namespace

double oracle_mu(const DgpConfig& cfg, const Vector& x, const Vector& w, int arm,
                 double threshold) {
  const double g = cfg.discount_base + dot_or_zero(cfg.discount_x, x);
  const double s = cfg.discount_noise;
  if (s == 0.0) throw ValidationError("oracle_mu: needs discount noise");
  double ed;  // E[clamp(Z) | arm]
  if (arm == 1) {
    const double p = 1.0 - norm_cdf((threshold - g) / s);
    const double body = truncated_normal_mass_mean(g, s, threshold, cfg.q_max) +
                        cfg.q_max * (1.0 - norm_cdf((cfg.q_max - g) / s));
    ed = body / std::max(p, 1e-12);
  } else {
    const double p = norm_cdf((threshold - g) / s);
    const double body = cfg.discount_floor * norm_cdf((cfg.discount_floor - g) / s) +
                        truncated_normal_mass_mean(g, s, cfg.discount_floor, threshold);
    ed = body / std::max(p, 1e-12);
  }
  // always buyers truncate V from below at c
  const double c = -oracle_selection_index(cfg, x, w) / cfg.sel_noise;
  const double tail = std::max(1.0 - norm_cdf(c), 1e-12);
  const double mills = norm_pdf(c) / tail;
  return (oracle_q(cfg, x) + cfg.v_loading * mills) * ed;
}

OracleTruth oracle_truth(const DgpConfig& cfg, int R, double binarize_threshold) {
  cfg.validate();
  if (R < 2) throw ValidationError("oracle_truth: R must be >= 2");
  Rng rng(derive_seed(cfg.seed, kSaltOracle));

  const bool analytic_theta =
      cfg.v_loading == 0.0 &&
      std::all_of(cfg.q_x.begin(), cfg.q_x.end(), [](double c) { return c == 0.0; }) &&
      std::clamp(cfg.q_base, cfg.q_lo, cfg.q_hi) * cfg.q_max <= 1.0;

  double slope_sum = 0.0, slope_sq = 0.0;
  double delta_sum = 0.0, delta_sq = 0.0;
  long n_ab = 0, n_delta = 0;
  double mono_wsum = 0.0, mono_vsum = 0.0, mono_v2sum = 0.0;

  Vector x(cfg.p_x), w(std::max(cfg.p_w, 0));
  for (int r = 0; r < R; ++r) {
    for (int j = 0; j < cfg.p_x; ++j) {
      const bool binary = j >= cfg.p_x - cfg.x_binary;
      x[j] = binary ? (rng.next_double() < 0.5 ? 1.0 : 0.0) : rng.next_normal();
    }
    for (int j = 0; j < cfg.p_w; ++j) {
      const bool binary = j >= cfg.p_w - cfg.w_binary;
      w[j] = binary ? (rng.next_double() < 0.5 ? 1.0 : 0.0) : rng.next_normal();
    }
    const double vv = rng.next_normal();
    const double g = cfg.discount_base + dot_or_zero(cfg.discount_x, x);
    const double d = std::clamp(g + cfg.discount_noise * rng.next_normal(),
                                cfg.discount_floor, cfg.q_max);
    const double a = oracle_selection_index(cfg, x, w);
    const bool ab = a + cfg.sel_noise * vv >= 0.0;
    const double qv = oracle_q(cfg, x);
    const double raw = qv + cfg.v_loading * vv;

    // monotonicity slope among surveyed units, weighted by P(S=1 | X, D)
    const double idx_s = (a + cfg.sel_jump + cfg.sel_slope * d) / cfg.sel_noise;
    const double ws = norm_cdf(idx_s);
    if (ws > 0.0) {
      const double val = norm_cdf(a / cfg.sel_noise) * (cfg.sel_slope / cfg.sel_noise) *
                         norm_pdf(idx_s) / std::max(ws * ws, 1e-300);
      mono_wsum += ws;
      mono_vsum += ws * val;
      mono_v2sum += ws * val * val;
    }

    if (!ab) continue;
    ++n_ab;
    const double sl = (raw > 0.0 && raw * d < 1.0) ? raw : 0.0;
    slope_sum += sl;
    slope_sq += sl * sl;

    // binarized contrast: redraw the discount from each arm's conditional law
    double d1 = 0.0, d0 = 0.0;
    bool ok1 = false, ok0 = false;
    for (int attempt = 0; attempt < 10000 && !ok1; ++attempt) {
      const double z = std::clamp(g + cfg.discount_noise * rng.next_normal(),
                                  cfg.discount_floor, cfg.q_max);
      if (z >= binarize_threshold) {
        d1 = z;
        ok1 = true;
      }
    }
    for (int attempt = 0; attempt < 10000 && !ok0; ++attempt) {
      const double z = std::clamp(g + cfg.discount_noise * rng.next_normal(),
                                  cfg.discount_floor, cfg.q_max);
      if (z < binarize_threshold) {
        d0 = z;
        ok0 = true;
      }
    }
    if (ok1 && ok0) {
      const double contrib = std::clamp(raw * d1, 0.0, 1.0) - std::clamp(raw * d0, 0.0, 1.0);
      delta_sum += contrib;
      delta_sq += contrib * contrib;
      ++n_delta;
    }
  }
  if (n_ab < 2 || n_delta < 2) {
    throw EstimationError("oracle_truth: too few always-buyer draws; adjust the config");
  }

  OracleTruth t;
  t.draws = R;
  if (analytic_theta) {
    t.theta_ab = std::clamp(cfg.q_base, cfg.q_lo, cfg.q_hi);
    t.theta_se = 0.0;
    t.computed_by = "analytic";
  } else {
    t.theta_ab = slope_sum / n_ab;
    const double var = (slope_sq / n_ab - t.theta_ab * t.theta_ab) / (n_ab - 1);
    t.theta_se = std::sqrt(std::max(var, 0.0));
    t.computed_by = "monte-carlo";
  }
  t.delta_ab_binary = delta_sum / n_delta;
  {
    const double var = (delta_sq / n_delta - t.delta_ab_binary * t.delta_ab_binary) /
                       (n_delta - 1);
    t.delta_se = std::sqrt(std::max(var, 0.0));
  }
  t.monotonicity_slope = mono_vsum / mono_wsum;
  {
    // self-normalized importance-sampling variance
    const double m = t.monotonicity_slope;
    const double num = mono_v2sum - 2.0 * m * mono_vsum + m * m * mono_wsum;
    t.monotonicity_se = std::sqrt(std::max(num, 0.0)) / mono_wsum;
  }
  return t;
}

std::string to_string(McEstimator e) {
  switch (e) {
    case McEstimator::cf_ape: return "cf_ape";
    case McEstimator::dml_ate: return "dml_ate";
    case McEstimator::ols: return "ols";
    case McEstimator::psm: return "psm";
  }
  return "cf_ape";
}

McSummary monte_carlo_study(const DgpConfig& cfg, int reps, McEstimator estimator,
                            const EstimatorSettings& settings, int oracle_draws) {
  if (reps < 2) throw ValidationError("monte_carlo_study: reps must be >= 2");
  const OracleTruth truth = oracle_truth(cfg, oracle_draws, settings.treatment.binarize_threshold);

  McSummary out;
  out.estimator = to_string(estimator);
  out.truth = estimator == McEstimator::dml_ate || estimator == McEstimator::psm
                  ? truth.delta_ab_binary
                  : truth.theta_ab;
  out.reps.resize(reps);

  parallel_for(reps, [&](int r) {
    McRep& rep = out.reps[r];
    try {
      const SimDraw sim =
          simulate_with_seed(cfg, derive_seed(cfg.seed, kSaltMcRep, static_cast<uint64_t>(r)));
      const Dataset ab = filter_always_buyers(sim.observed);
      if (ab.n() < 50) throw EstimationError("too few always buyers in this rep");
      EstimatorSettings s = settings;
      s.seed = derive_seed(settings.seed, 0xe57, static_cast<uint64_t>(r));
      const Matrix C = ab.controls_matrix();
      const Vector y = ab.outcome();
      const Vector d = ab.treatment();
      switch (estimator) {
        case McEstimator::cf_ape: {
          const CausalPipeline pipe =
              fit_causal_pipeline(C, y, d, s.causal_params(0x11), ab.control_names());
          const ApeEstimate ape = estimate_ape(pipe.cf);
          rep.estimate = ape.theta;
          rep.se = ape.se;
          break;
        }
        case McEstimator::dml_ate: {
          Vector dt(d.size());
          for (Eigen::Index i = 0; i < d.size(); ++i) {
            dt[i] = binarize_treatment(d[i], s.treatment);
          }
          const DrAteResult res = dml_ate(C, y, dt, s.folds, s.trim_threshold,
                                          s.nuisance_params(0x12), s.seed);
          rep.estimate = res.ate;
          rep.se = res.se;
          rep.n_used = res.n_used;
          rep.n_trimmed = res.n_trimmed;
          break;
        }
        case McEstimator::ols: {
          Matrix design(ab.n(), 2 + C.cols());
          design.col(0) = Vector::Ones(ab.n());
          design.col(1) = d;
          design.rightCols(C.cols()) = C;
          const OlsFit fit = ols(y, design);
          rep.estimate = fit.coef[1];
          rep.se = fit.se[1];
          break;
        }
        case McEstimator::psm: {
          Vector dt(d.size());
          for (Eigen::Index i = 0; i < d.size(); ++i) {
            dt[i] = binarize_treatment(d[i], s.treatment);
          }
          const Matrix design = with_intercept(C);
          const ProbitFit pf = probit_fit(dt, design);
          const Vector ps = probit_predict(pf.coef, design);
          rep.estimate = psm_ate(y, dt, ps);
          const PsmBootstrap boot =
              bootstrap_psm(y, dt, design, s.bootstrap_reps, s.seed, rep.estimate);
          rep.se = boot.se;
          break;
        }
      }
      rep.ok = true;
    } catch (const std::exception& e) {
      rep.ok = false;
      rep.error = e.what();
    }
  });

  double sum = 0.0, sq = 0.0, se_sum = 0.0;
  int covered = 0;
  for (const auto& rep : out.reps) {
    if (!rep.ok) {
      ++out.reps_failed;
      continue;
    }
    ++out.reps_ok;
    sum += rep.estimate;
    sq += (rep.estimate - out.truth) * (rep.estimate - out.truth);
    se_sum += rep.se;
    if (std::fabs(rep.estimate - out.truth) <= 1.959963984540054 * rep.se) ++covered;
  }
  if (out.reps_ok == 0) throw EstimationError("monte_carlo_study: every rep failed");
  out.bias = sum / out.reps_ok - out.truth;
  out.rmse = std::sqrt(sq / out.reps_ok);
  out.mean_se = se_sum / out.reps_ok;
  out.coverage = static_cast<double>(covered) / out.reps_ok;
  return out;
}

}  // namespace dfx

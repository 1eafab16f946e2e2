#include "dfx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "dfx/csv.hpp"
#include "dfx/rng.hpp"

namespace dfx {

std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::binary: return "binary";
    case ColumnKind::categorical: return "categorical";
  }
  return "continuous";
}

std::string to_string(ColumnRole r) {
  switch (r) {
    case ColumnRole::outcome: return "outcome";
    case ColumnRole::treatment: return "treatment";
    case ColumnRole::s0: return "s0";
    case ColumnRole::x: return "x";
    case ColumnRole::w: return "w";
    case ColumnRole::ignore: return "ignore";
  }
  return "ignore";
}

ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "binary") return ColumnKind::binary;
  if (s == "categorical") return ColumnKind::categorical;
  throw ValidationError("unknown column kind: " + s);
}

ColumnRole column_role_from_string(const std::string& s) {
  if (s == "outcome") return ColumnRole::outcome;
  if (s == "treatment") return ColumnRole::treatment;
  if (s == "s0") return ColumnRole::s0;
  if (s == "x") return ColumnRole::x;
  if (s == "w") return ColumnRole::w;
  if (s == "ignore") return ColumnRole::ignore;
  throw ValidationError("unknown column role: " + s);
}

void TreatmentSpec::validate() const {
  if (!(q_max > 0.0 && q_max <= 1.0)) {
    throw ValidationError("treatment spec: q_max must lie in (0, 1]");
  }
  if (!(binarize_threshold > 0.0 && binarize_threshold < q_max)) {
    throw ValidationError("treatment spec: need 0 < binarize_threshold < q_max");
  }
}

int binarize_treatment(double d, const TreatmentSpec& spec) {
  spec.validate();
  if (!(d > 0.0 && d <= spec.q_max)) {
    throw ValidationError("treatment value outside (0, Q]: " + format_double(d));
  }
  return d >= spec.binarize_threshold ? 1 : 0;
}

int Dataset::col_index(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

Vector Dataset::col(const std::string& name) const {
  const int i = col_index(name);
  if (i < 0) throw ValidationError("no such column: " + name);
  return values.col(i);
}

std::vector<int> Dataset::role_indices(ColumnRole role) const {
  std::vector<int> out;
  for (size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].role == role) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<std::string> Dataset::names_of(const std::vector<int>& idx) const {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(columns[i].name);
  return out;
}

Matrix Dataset::matrix_of(const std::vector<int>& idx) const {
  Matrix out(values.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = values.col(idx[j]);
  return out;
}

Matrix Dataset::controls_matrix() const {
  auto xi = role_indices(ColumnRole::x);
  auto wi = role_indices(ColumnRole::w);
  xi.insert(xi.end(), wi.begin(), wi.end());
  return matrix_of(xi);
}

std::vector<std::string> Dataset::control_names() const {
  auto xi = role_indices(ColumnRole::x);
  auto wi = role_indices(ColumnRole::w);
  xi.insert(xi.end(), wi.begin(), wi.end());
  return names_of(xi);
}

Vector Dataset::outcome() const {
  const auto idx = role_indices(ColumnRole::outcome);
  if (idx.empty()) throw ValidationError("dataset has no outcome column");
  return values.col(idx.front());
}

std::string Dataset::outcome_name() const {
  const auto idx = role_indices(ColumnRole::outcome);
  if (idx.empty()) throw ValidationError("dataset has no outcome column");
  return columns[idx.front()].name;
}

Vector Dataset::treatment() const {
  const auto idx = role_indices(ColumnRole::treatment);
  if (idx.empty()) throw ValidationError("dataset has no treatment column");
  return values.col(idx.front());
}

Vector Dataset::s0() const {
  const auto idx = role_indices(ColumnRole::s0);
  if (idx.empty()) throw ValidationError("dataset has no s0 column");
  return values.col(idx.front());
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
  Dataset out;
  out.columns = columns;
  out.provenance = provenance;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (size_t r = 0; r < rows.size(); ++r) {
    out.values.row(static_cast<Eigen::Index>(r)) = values.row(rows[r]);
  }
  return out;
}

void Dataset::validate() const {
  if (static_cast<size_t>(values.cols()) != columns.size()) {
    throw ValidationError("dataset: column metadata does not match value matrix");
  }
  for (const auto& c : columns) {
    if (c.kind == ColumnKind::categorical) {
      throw ValidationError("dataset: categorical column survived ingestion: " + c.name);
    }
  }
  if (!values.allFinite()) {
    throw ValidationError("dataset: non-finite values present");
  }
}

std::vector<std::pair<std::string, SchemaEntry>> read_schema(const std::string& path) {
  const auto kv = read_kv_file(path);
  std::map<std::string, SchemaEntry> bycol;
  std::vector<std::string> order;
  for (const auto& [key, value] : kv) {
    const size_t dot = key.rfind('.');
    if (dot == std::string::npos) {
      throw ValidationError("schema key must look like '<column>.role': " + key);
    }
    const std::string col = key.substr(0, dot);
    const std::string attr = key.substr(dot + 1);
    if (!bycol.count(col)) order.push_back(col);
    auto& entry = bycol[col];
    if (attr == "role") {
      entry.role = column_role_from_string(value);
    } else if (attr == "kind") {
      entry.kind = column_kind_from_string(value);
    } else {
      throw ValidationError("unknown schema attribute: " + key);
    }
  }
  std::vector<std::pair<std::string, SchemaEntry>> out;
  out.reserve(order.size());
  for (const auto& col : order) out.emplace_back(col, bycol[col]);
  return out;
}

void write_schema(const std::string& path,
                  const std::vector<std::pair<std::string, SchemaEntry>>& entries) {
  std::map<std::string, std::string> kv;
  for (const auto& [col, e] : entries) {
    kv[col + ".role"] = to_string(e.role);
    kv[col + ".kind"] = to_string(e.kind);
  }
  write_kv_file(path, kv);
}

namespace {

struct RawColumn {
  std::string name;
  SchemaEntry schema;
  int csv_index = -1;
};

double parse_numeric_cell(const std::string& cell, const RawColumn& col) {
  const auto v = parse_double(cell);
  if (!v) {
    throw ValidationError("non-numeric value '" + cell + "' in numeric column " + col.name);
  }
  if (col.schema.kind == ColumnKind::binary && *v != 0.0 && *v != 1.0) {
    throw ValidationError("non-binary value '" + cell + "' in binary column " + col.name);
  }
  return *v;
}

}  // namespace

Dataset load_survey(const std::string& csv_path, const std::string& schema_path,
                    const TreatmentSpec& spec, LoadReport* report) {
  spec.validate();
  const auto schema = read_schema(schema_path);
  const CsvTable csv = read_csv(csv_path);

  std::map<std::string, SchemaEntry> schema_map(schema.begin(), schema.end());
  std::vector<RawColumn> cols;
  int n_outcome = 0, n_treatment = 0, n_s0 = 0;
  for (size_t j = 0; j < csv.header.size(); ++j) {
    const auto it = schema_map.find(csv.header[j]);
    if (it == schema_map.end()) {
      throw ValidationError("column '" + csv.header[j] + "' has no role in the schema");
    }
    RawColumn rc;
    rc.name = csv.header[j];
    rc.schema = it->second;
    rc.csv_index = static_cast<int>(j);
    if (rc.schema.role == ColumnRole::outcome) ++n_outcome;
    if (rc.schema.role == ColumnRole::treatment) ++n_treatment;
    if (rc.schema.role == ColumnRole::s0) ++n_s0;
    if (rc.schema.kind == ColumnKind::categorical &&
        (rc.schema.role == ColumnRole::outcome || rc.schema.role == ColumnRole::treatment ||
         rc.schema.role == ColumnRole::s0)) {
      throw ValidationError("column " + rc.name + ": outcome/treatment/s0 cannot be categorical");
    }
    cols.push_back(rc);
  }
  if (n_outcome < 1) throw ValidationError("schema assigns no outcome column");
  if (n_treatment != 1) throw ValidationError("schema must assign exactly one treatment column");
  if (n_s0 != 1) throw ValidationError("schema must assign exactly one s0 column");

  LoadReport rep;

  // pass 1: row filtering
  std::vector<int> kept_rows;
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    bool absent_required = false, bad_treatment = false, absent_covariate = false;
    for (const auto& c : cols) {
      if (c.schema.role == ColumnRole::ignore) continue;
      const std::string& cell = row[c.csv_index];
      const bool absent = is_absent(cell);
      switch (c.schema.role) {
        case ColumnRole::outcome:
        case ColumnRole::s0:
          if (absent) absent_required = true;
          break;
        case ColumnRole::treatment: {
          if (absent) {
            absent_required = true;
          } else {
            const auto v = parse_double(cell);
            if (v && !(*v > 0.0 && *v <= spec.q_max)) bad_treatment = true;
          }
          break;
        }
        case ColumnRole::x:
        case ColumnRole::w:
          if (absent) absent_covariate = true;
          break;
        default:
          break;
      }
    }
    if (absent_required) {
      ++rep.rejected_absent_required;
    } else if (bad_treatment) {
      ++rep.rejected_treatment_range;
    } else if (absent_covariate) {
      ++rep.rejected_absent_covariate;
    } else {
      kept_rows.push_back(static_cast<int>(r));
    }
  }

  // pass 2: materialize columns; categoricals expand to one-hot indicators
  Dataset ds;
  ds.provenance = Provenance::ingested;
  const int n = static_cast<int>(kept_rows.size());
  std::vector<Vector> out_cols;
  for (const auto& c : cols) {
    if (c.schema.role == ColumnRole::ignore) continue;
    if (c.schema.kind == ColumnKind::categorical) {
      std::set<std::string> levels;
      for (int r : kept_rows) levels.insert(trim(csv.rows[r][c.csv_index]));
      for (const auto& level : levels) {
        Vector v(n);
        for (int i = 0; i < n; ++i) {
          v[i] = trim(csv.rows[kept_rows[i]][c.csv_index]) == level ? 1.0 : 0.0;
        }
        out_cols.push_back(std::move(v));
        ds.columns.push_back({c.name + "=" + level, ColumnKind::binary, c.schema.role, c.name});
      }
    } else {
      Vector v(n);
      for (int i = 0; i < n; ++i) {
        v[i] = parse_numeric_cell(csv.rows[kept_rows[i]][c.csv_index], c);
      }
      out_cols.push_back(std::move(v));
      ds.columns.push_back({c.name, c.schema.kind, c.schema.role, c.name});
    }
  }
  ds.values.resize(n, static_cast<Eigen::Index>(out_cols.size()));
  for (size_t j = 0; j < out_cols.size(); ++j) ds.values.col(static_cast<Eigen::Index>(j)) = out_cols[j];
  rep.n_loaded = n;
  if (report) *report = rep;
  ds.validate();
  return ds;
}

Dataset filter_always_buyers(const Dataset& ds, bool* warned_empty) {
  const Vector s = ds.s0();
  std::vector<int> keep;
  for (int i = 0; i < ds.n(); ++i) {
    if (s[i] == 1.0) keep.push_back(i);
  }
  if (warned_empty) *warned_empty = keep.empty();
  return ds.subset(keep);
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double train_frac,
                                             uint64_t seed) {
  if (ds.n() < 2) throw ValidationError("train_test_split: need at least 2 records");
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw ValidationError("train_test_split: train_frac must lie in (0, 1)");
  }
  const int n = ds.n();
  int k = static_cast<int>(std::llround(train_frac * n));
  k = std::clamp(k, 1, n - 1);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0x5917u));
  shuffle(idx, rng);
  std::vector<int> train(idx.begin(), idx.begin() + k);
  std::vector<int> test(idx.begin() + k, idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {ds.subset(train), ds.subset(test)};
}

Dataset balance_binary_outcome(const Dataset& ds, const std::string& outcome_col,
                               uint64_t seed) {
  const Vector y = ds.col(outcome_col);
  std::vector<int> ones, zeros;
  for (int i = 0; i < ds.n(); ++i) {
    if (y[i] == 1.0) {
      ones.push_back(i);
    } else if (y[i] == 0.0) {
      zeros.push_back(i);
    } else {
      throw ValidationError("balance_binary_outcome: non-binary value in " + outcome_col);
    }
  }
  if (ones.empty() || zeros.empty()) {
    throw ValidationError("balance_binary_outcome: a class is absent in " + outcome_col);
  }
  if (ones.size() == zeros.size()) return ds;

  const auto& minority = ones.size() < zeros.size() ? ones : zeros;
  const auto& majority = ones.size() < zeros.size() ? zeros : ones;
  Rng rng(derive_seed(seed, 0xba1a2ce));
  const auto pick =
      sample_without_replacement(static_cast<int>(majority.size()),
                                 static_cast<int>(minority.size()), rng);
  std::vector<int> keep = minority;
  for (int p : pick) keep.push_back(majority[p]);
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

}  // namespace dfx

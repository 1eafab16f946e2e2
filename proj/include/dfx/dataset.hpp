#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dfx/types.hpp"

namespace dfx {

enum class ColumnKind { continuous, binary, categorical };
enum class ColumnRole { outcome, treatment, s0, x, w, ignore };

std::string to_string(ColumnKind k);
std::string to_string(ColumnRole r);
ColumnKind column_kind_from_string(const std::string& s);
ColumnRole column_role_from_string(const std::string& s);

struct ColumnInfo {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  ColumnRole role = ColumnRole::x;
  // original column for one-hot expansions, otherwise equal to name
  std::string source;
};

enum class Provenance { ingested, simulated };

// Maximum discount and the cut used to binarize the continuous rate.
struct TreatmentSpec {
  double q_max = 0.7;
  double binarize_threshold = 0.3;
  void validate() const;
};

// 1 iff d >= threshold; d must lie in (0, q_max]
int binarize_treatment(double d, const TreatmentSpec& spec);

// Rectangular, fully numeric table. Categorical inputs are one-hot
// expanded at ingestion, so a column is just a name, kind and role.
struct Dataset {
  Matrix values;  // n x m
  std::vector<ColumnInfo> columns;
  Provenance provenance = Provenance::ingested;

  int n() const { return static_cast<int>(values.rows()); }
  int m() const { return static_cast<int>(values.cols()); }

  int col_index(const std::string& name) const;  // -1 when absent
  bool has_column(const std::string& name) const { return col_index(name) >= 0; }
  Vector col(const std::string& name) const;
  Vector col(int idx) const { return values.col(idx); }

  std::vector<int> role_indices(ColumnRole role) const;
  std::vector<std::string> names_of(const std::vector<int>& idx) const;
  Matrix matrix_of(const std::vector<int>& idx) const;

  // covariate blocks
  Matrix x_matrix() const { return matrix_of(role_indices(ColumnRole::x)); }
  Matrix w_matrix() const { return matrix_of(role_indices(ColumnRole::w)); }
  Matrix controls_matrix() const;  // [X W]
  std::vector<std::string> x_names() const { return names_of(role_indices(ColumnRole::x)); }
  std::vector<std::string> w_names() const { return names_of(role_indices(ColumnRole::w)); }
  std::vector<std::string> control_names() const;

  // first outcome column is the primary one
  Vector outcome() const;
  std::string outcome_name() const;
  Vector treatment() const;
  Vector s0() const;

  Dataset subset(const std::vector<int>& rows) const;

  void validate() const;
};

struct SchemaEntry {
  ColumnRole role = ColumnRole::ignore;
  ColumnKind kind = ColumnKind::continuous;
};

// schema file format: "<column>.role = x" and optional "<column>.kind = binary"
std::vector<std::pair<std::string, SchemaEntry>> read_schema(const std::string& path);
void write_schema(const std::string& path,
                  const std::vector<std::pair<std::string, SchemaEntry>>& entries);

struct LoadReport {
  int n_loaded = 0;
  int rejected_absent_required = 0;  // absent outcome / treatment / s0
  int rejected_treatment_range = 0;  // treatment outside (0, Q]
  int rejected_absent_covariate = 0;
  int total_rejected() const {
    return rejected_absent_required + rejected_treatment_range + rejected_absent_covariate;
  }
};

Dataset load_survey(const std::string& csv_path, const std::string& schema_path,
                    const TreatmentSpec& spec, LoadReport* report = nullptr);

// retains records with s0 == 1; empty result allowed (flagged via *warned_empty)
Dataset filter_always_buyers(const Dataset& ds, bool* warned_empty = nullptr);

// disjoint random partition, deterministic given seed; sizes round(n*frac), rest
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double train_frac,
                                             uint64_t seed);

// all minority-class records plus an equal-size uniform draw from the majority
Dataset balance_binary_outcome(const Dataset& ds, const std::string& outcome_col,
                               uint64_t seed);

}  // namespace dfx

#pragma once

#include <map>
#include <string>
#include <vector>

#include "dfx/dataset.hpp"
#include "dfx/forest.hpp"
#include "dfx/stats.hpp"
#include "dfx/types.hpp"

namespace dfx {

// Unified result record: every command emits the same field set.
struct ResultRecord {
  std::string method;
  double effect = 0.0;
  double se = 0.0;
  double p_value = 1.0;
  long n = 0;
  long n_trimmed = 0;
  double threshold = 0.0;  // NaN when not applicable
  std::string note;
};

std::string results_csv(const std::vector<ResultRecord>& records);
void write_results_csv(const std::string& path, const std::vector<ResultRecord>& records);

std::string importance_csv(const ImportanceTable& table, int top = -1);
void write_importance_csv(const std::string& path, const ImportanceTable& table,
                          int top = -1);

std::string histogram_csv(const Histogram& h);
void write_histogram_csv(const std::string& path, const Histogram& h);

// per-arm bin counts share one file
std::string arm_histogram_csv(const std::vector<long>& treated,
                              const std::vector<long>& control, int n_bins);

void write_dataset_csv(const Dataset& ds, const std::string& path);
void write_dataset_schema(const Dataset& ds, const std::string& path);
void write_matrix_csv(const Matrix& m, const std::vector<std::string>& names,
                      const std::string& path);

// Resolved run configuration; a manifest is itself a valid config file.
struct Manifest {
  std::map<std::string, std::string> kv;

  void set(const std::string& key, const std::string& value) { kv[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, long value);
  void set(const std::string& key, uint64_t value);
  std::string get(const std::string& key, const std::string& fallback = "") const;

  void write(const std::string& path) const;
  static Manifest read(const std::string& path);
};

}  // namespace dfx

#include "dfx/report.hpp"

#include <cmath>
#include <sstream>

#include "dfx/csv.hpp"

namespace dfx {

namespace {
std::string num_or_na(double v) { return std::isnan(v) ? "NA" : format_double(v); }
}  // namespace

std::string results_csv(const std::vector<ResultRecord>& records) {
  std::ostringstream out;
  out << "method,effect,se,p_value,n,n_trimmed,threshold,note\n";
  for (const auto& r : records) {
    out << r.method << "," << num_or_na(r.effect) << "," << num_or_na(r.se) << ","
        << num_or_na(r.p_value) << "," << r.n << "," << r.n_trimmed << ","
        << num_or_na(r.threshold) << "," << r.note << "\n";
  }
  return out.str();
}

void write_results_csv(const std::string& path, const std::vector<ResultRecord>& records) {
  write_text_file(path, results_csv(records));
}

std::string importance_csv(const ImportanceTable& table, int top) {
  std::ostringstream out;
  out << "feature,importance\n";
  int k = 0;
  for (const auto& e : table.entries) {
    if (top >= 0 && k >= top) break;
    out << e.feature << "," << format_double(e.importance) << "\n";
    ++k;
  }
  return out.str();
}

void write_importance_csv(const std::string& path, const ImportanceTable& table, int top) {
  write_text_file(path, importance_csv(table, top));
}

std::string histogram_csv(const Histogram& h) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,count\n";
  const int bins = static_cast<int>(h.counts.size());
  const double w = (h.hi - h.lo) / bins;
  for (int b = 0; b < bins; ++b) {
    out << format_double(h.lo + b * w) << "," << format_double(h.lo + (b + 1) * w) << ","
        << h.counts[b] << "\n";
  }
  return out.str();
}

void write_histogram_csv(const std::string& path, const Histogram& h) {
  write_text_file(path, histogram_csv(h));
}

std::string arm_histogram_csv(const std::vector<long>& treated,
                              const std::vector<long>& control, int n_bins) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,treated,control\n";
  const double w = 1.0 / n_bins;
  for (int b = 0; b < n_bins; ++b) {
    out << format_double(b * w) << "," << format_double((b + 1) * w) << "," << treated[b]
        << "," << control[b] << "\n";
  }
  return out.str();
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ostringstream out;
  for (size_t j = 0; j < ds.columns.size(); ++j) {
    if (j) out << ",";
    out << ds.columns[j].name;
  }
  out << "\n";
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.m(); ++j) {
      if (j) out << ",";
      out << format_double(ds.values(i, j));
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

void write_dataset_schema(const Dataset& ds, const std::string& path) {
  std::vector<std::pair<std::string, SchemaEntry>> entries;
  for (const auto& c : ds.columns) {
    entries.push_back({c.name, {c.role, c.kind}});
  }
  write_schema(path, entries);
}

void write_matrix_csv(const Matrix& m, const std::vector<std::string>& names,
                      const std::string& path) {
  if (static_cast<size_t>(m.cols()) != names.size()) {
    throw ValidationError("write_matrix_csv: name count mismatch");
  }
  std::ostringstream out;
  for (size_t j = 0; j < names.size(); ++j) {
    if (j) out << ",";
    out << names[j];
  }
  out << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ",";
      out << format_double(m(i, j));
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

void Manifest::set(const std::string& key, double value) { kv[key] = format_double(value); }
void Manifest::set(const std::string& key, long value) { kv[key] = std::to_string(value); }
void Manifest::set(const std::string& key, uint64_t value) { kv[key] = std::to_string(value); }

std::string Manifest::get(const std::string& key, const std::string& fallback) const {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

void Manifest::write(const std::string& path) const { write_kv_file(path, kv); }

Manifest Manifest::read(const std::string& path) {
  Manifest m;
  m.kv = read_kv_file(path);
  return m;
}

}  // namespace dfx

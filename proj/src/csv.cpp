#include "dfx/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dfx/types.hpp"

namespace dfx {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}
}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open CSV file: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty CSV file: " + path);
  t.header = split_csv_line(line);
  for (auto& h : t.header) h = trim(h);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto row = split_csv_line(line);
    if (row.size() != t.header.size()) {
      throw ValidationError("CSV row with " + std::to_string(row.size()) +
                            " fields, expected " + std::to_string(t.header.size()) +
                            " in " + path);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

bool is_absent(const std::string& field) {
  const std::string f = trim(field);
  return f.empty() || f == "NA" || f == "na" || f == "NaN";
}

std::optional<double> parse_double(const std::string& s) {
  const std::string f = trim(s);
  if (f.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = f.data();
  const char* last = f.data() + f.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << content;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("malformed line " + std::to_string(lineno) + " in " + path +
                            " (expected key = value)");
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

void write_kv_file(const std::string& path, const std::map<std::string, std::string>& kv) {
  std::ostringstream ss;
  for (const auto& [k, v] : kv) ss << k << " = " << v << "\n";
  write_text_file(path, ss.str());
}

}  // namespace dfx

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dfx {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);

// absent values are empty fields or the literal "NA"
bool is_absent(const std::string& field);

std::optional<double> parse_double(const std::string& s);

// shortest representation that round-trips exactly
std::string format_double(double v);

std::string trim(const std::string& s);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// "key = value" lines, '#' comments; keys kept in sorted order
std::map<std::string, std::string> read_kv_file(const std::string& path);
void write_kv_file(const std::string& path, const std::map<std::string, std::string>& kv);

}  // namespace dfx

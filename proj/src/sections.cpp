#include "dfx/sections.hpp"

#include <algorithm>
#include <map>

#include "dfx/csv.hpp"

namespace dfx {

double aggregate_trip_discount(const SectionTable& trip) {
  if (trip.sections.empty()) {
    throw ValidationError("aggregate_trip_discount: trip has no sections");
  }
  double wsum = 0.0, dsum = 0.0;
  for (const auto& s : trip.sections) {
    if (!(s.distance_km > 0.0)) {
      throw ValidationError("aggregate_trip_discount: non-positive section distance");
    }
    if (!s.discount) {
      throw ValidationError("aggregate_trip_discount: section without a discount");
    }
    wsum += s.distance_km * (*s.discount);
    dsum += s.distance_km;
  }
  return wsum / dsum;
}

UtilizationImputation impute_utilization(const SectionTable& trip) {
  if (trip.sections.empty()) {
    throw ValidationError("impute_utilization: trip has no sections");
  }
  const int total = static_cast<int>(trip.sections.size());
  int absent = 0;
  double observed_sum = 0.0;
  for (const auto& s : trip.sections) {
    if (s.utilization) {
      observed_sum += *s.utilization;
    } else {
      ++absent;
    }
  }
  UtilizationImputation out;
  out.imputed_share = static_cast<double>(absent) / total;
  if (absent * 2 > total) {  // strictly more than 50% missing
    out.kept = false;
    return out;
  }
  out.kept = true;
  const double observed_mean = observed_sum / (total - absent);
  double all_sum = 0.0;
  for (const auto& s : trip.sections) {
    all_sum += s.utilization ? *s.utilization : observed_mean;
  }
  out.utilization = all_sum / total;
  return out;
}

std::vector<SectionTable> load_section_tables(const std::string& path) {
  const CsvTable csv = read_csv(path);
  int c_trip = -1, c_idx = -1, c_dist = -1, c_disc = -1, c_util = -1;
  for (size_t j = 0; j < csv.header.size(); ++j) {
    const auto& h = csv.header[j];
    if (h == "trip_id") c_trip = static_cast<int>(j);
    if (h == "section_index") c_idx = static_cast<int>(j);
    if (h == "distance_km") c_dist = static_cast<int>(j);
    if (h == "discount") c_disc = static_cast<int>(j);
    if (h == "utilization") c_util = static_cast<int>(j);
  }
  if (c_trip < 0 || c_idx < 0 || c_dist < 0 || c_disc < 0 || c_util < 0) {
    throw ValidationError(
        "section table needs columns trip_id, section_index, distance_km, discount, "
        "utilization");
  }

  std::map<std::string, std::vector<std::pair<int, Section>>> grouped;
  std::vector<std::string> order;
  for (const auto& row : csv.rows) {
    const std::string trip = trim(row[c_trip]);
    const auto idx = parse_double(row[c_idx]);
    const auto dist = parse_double(row[c_dist]);
    if (!idx || !dist) {
      throw ValidationError("section table: bad section_index or distance_km for trip " + trip);
    }
    Section s;
    s.distance_km = *dist;
    if (!is_absent(row[c_disc])) {
      const auto d = parse_double(row[c_disc]);
      if (!d) throw ValidationError("section table: bad discount for trip " + trip);
      s.discount = *d;
    }
    if (!is_absent(row[c_util])) {
      const auto u = parse_double(row[c_util]);
      if (!u) throw ValidationError("section table: bad utilization for trip " + trip);
      s.utilization = *u;
    }
    if (!grouped.count(trip)) order.push_back(trip);
    grouped[trip].emplace_back(static_cast<int>(*idx), s);
  }

  std::vector<SectionTable> out;
  out.reserve(order.size());
  for (const auto& trip : order) {
    auto& rows = grouped[trip];
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    SectionTable t;
    t.trip_id = trip;
    for (auto& [i, s] : rows) t.sections.push_back(s);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace dfx

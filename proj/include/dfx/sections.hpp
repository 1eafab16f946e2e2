#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dfx/types.hpp"

namespace dfx {

struct Section {
  double distance_km = 0.0;
  std::optional<double> discount;     // fraction
  std::optional<double> utilization;  // percent in [0, 100]
};

// Sections between adjacent stops of one journey.
struct SectionTable {
  std::string trip_id;
  std::vector<Section> sections;
};

// distance-weighted average of the per-section discounts
double aggregate_trip_discount(const SectionTable& trip);

struct UtilizationImputation {
  bool kept = false;
  double utilization = 0.0;    // mean over all sections after imputation
  double imputed_share = 0.0;  // absent / total
};

// trips with more than half of their sections missing utilization are dropped;
// otherwise absent values are replaced by the mean of the observed ones
UtilizationImputation impute_utilization(const SectionTable& trip);

// CSV with columns trip_id, section_index, distance_km, discount, utilization;
// rows grouped into one table per trip, ordered by section_index
std::vector<SectionTable> load_section_tables(const std::string& path);

}  // namespace dfx

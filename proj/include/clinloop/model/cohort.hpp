#pragma once

#include <string>
#include <vector>

#include "clinloop/emr/warehouse.hpp"

namespace clinloop::model {

enum class Split { Train, Validation, Test };

std::string to_string(Split s);

struct CohortRow {
  std::string order_id;
  std::string patient_id;
  emr::PanelCode panel_code = emr::PanelCode::CBC;
  std::string component_code;
  Timestamp inference_time = 0;  // the order time
  bool label = false;            // the result's abnormal flag
  Split split = Split::Train;
};

struct Cohort {
  std::vector<CohortRow> rows;
  int dropped_missing_result = 0;

  std::vector<CohortRow> split_rows(Split s) const;
};

// Uniform per-year sample without replacement of orders for one
// (panel, component) task, labels joined from results. Years are calendar
// years in ascending order; the first n-2 become Train, then Validation,
// then Test.
Cohort build_cohort(const emr::WarehouseData& warehouse, emr::PanelCode panel,
                    const std::string& component_code, int per_year,
                    const std::vector<int>& years, std::uint64_t seed);

}  // namespace clinloop::model

#include "clinloop/model/cohort.hpp"

#include <algorithm>

#include "clinloop/rng.hpp"

namespace clinloop::model {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

std::vector<CohortRow> Cohort::split_rows(Split s) const {
  std::vector<CohortRow> out;
  for (const auto& r : rows) {
    if (r.split == s) out.push_back(r);
  }
  return out;
}

Cohort build_cohort(const emr::WarehouseData& warehouse, emr::PanelCode panel,
                    const std::string& component_code, int per_year,
                    const std::vector<int>& years, std::uint64_t seed) {
  if (per_year < 1) throw ValidationError("per_year must be >= 1");
  if (years.size() < 3) {
    throw ValidationError("need at least 3 years for train/validation/test");
  }
  const auto& components = emr::panel_components(panel);
  if (std::find(components.begin(), components.end(), component_code) ==
      components.end()) {
    throw ValidationError("component '" + component_code +
                          "' is not part of panel " + emr::to_string(panel));
  }

  std::vector<int> sorted_years = years;
  std::sort(sorted_years.begin(), sorted_years.end());

  Cohort cohort;
  for (std::size_t yi = 0; yi < sorted_years.size(); ++yi) {
    const int year = sorted_years[yi];
    Split split = Split::Train;
    if (yi == sorted_years.size() - 1) {
      split = Split::Test;
    } else if (yi == sorted_years.size() - 2) {
      split = Split::Validation;
    }

    std::vector<int> candidates;
    for (int i = 0; i < static_cast<int>(warehouse.orders().size()); ++i) {
      const auto& o = warehouse.orders()[i];
      if (o.panel_code == panel && year_of(o.order_time) == year) {
        candidates.push_back(i);
      }
    }
    // Seeded Fisher-Yates, then take the prefix: a uniform sample without
    // replacement (or everything, when the year is exhausted).
    Rng rng = Rng::keyed(seed, "cohort", year);
    for (std::size_t j = 0; j + 1 < candidates.size(); ++j) {
      const std::size_t k = j + rng.index(candidates.size() - j);
      std::swap(candidates[j], candidates[k]);
    }
    const std::size_t take =
        std::min<std::size_t>(per_year, candidates.size());

    for (std::size_t j = 0; j < take; ++j) {
      const auto& o = warehouse.orders()[candidates[j]];
      const emr::LabResult* res = warehouse.find_result(o.order_id,
                                                        component_code);
      if (res == nullptr) {
        ++cohort.dropped_missing_result;
        continue;
      }
      CohortRow row;
      row.order_id = o.order_id;
      row.patient_id = o.patient_id;
      row.panel_code = panel;
      row.component_code = component_code;
      row.inference_time = o.order_time;
      row.label = res->abnormal;
      row.split = split;
      cohort.rows.push_back(std::move(row));
    }
  }

  std::sort(cohort.rows.begin(), cohort.rows.end(),
            [](const CohortRow& a, const CohortRow& b) {
              if (a.inference_time != b.inference_time)
                return a.inference_time < b.inference_time;
              return a.order_id < b.order_id;
            });
  return cohort;
}

}  // namespace clinloop::model

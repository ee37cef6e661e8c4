#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "clinloop/emr/types.hpp"
#include "clinloop/emr/world.hpp"

namespace clinloop::emr {

// Writes the flat warehouse export: patients.tsv, events.tsv, orders.tsv,
// results.tsv. Tab-separated, one header line, RFC3339 timestamps; only
// facts with effective/result time <= up_to are included.
void export_warehouse(const World& world, Timestamp up_to,
                      const std::filesystem::path& dest);

// The loaded warehouse, indexed for history slicing and cohort joins.
class WarehouseData {
 public:
  static WarehouseData load(const std::filesystem::path& dir);

  const std::vector<PatientRecord>& patients() const { return patients_; }
  const std::vector<DiagnosticOrder>& orders() const { return orders_; }
  const std::vector<LabResult>& results() const { return results_; }

  const PatientRecord* find_patient(const std::string& patient_id) const;
  // Events for one patient sorted by (effective_time, kind, code).
  const std::vector<ClinicalEvent>& events_for(const std::string& patient_id) const;
  const LabResult* find_result(const std::string& order_id,
                               const std::string& component) const;

  std::size_t n_events() const { return n_events_; }

 private:
  std::vector<PatientRecord> patients_;
  std::map<std::string, int> patient_index_;
  std::map<std::string, std::vector<ClinicalEvent>> events_by_patient_;
  std::vector<DiagnosticOrder> orders_;
  std::vector<LabResult> results_;
  std::map<std::string, std::map<std::string, int>> result_index_;
  std::size_t n_events_ = 0;
};

}  // namespace clinloop::emr

#pragma once

#include "clinloop/emr/client.hpp"
#include "clinloop/emr/warehouse.hpp"
#include "clinloop/features/history.hpp"

namespace clinloop::features {

// Builds a history out of live EMR reads: Patient, Condition,
// MedicationRequest since t-28d, Observation since t-14d. Throws
// NotFoundError for an unknown patient and SourceUnavailableError on
// transport failure; inference aborts rather than scoring a default.
PatientHistory fetch_history_transactional(emr::EmrClient& client,
                                           const std::string& patient_id,
                                           Timestamp inference_time);

// Same mapping from warehouse rows. The two adapters must agree exactly on
// every (patient, inference_time); that is the pipeline's parity contract.
PatientHistory load_history_warehouse(const emr::WarehouseData& warehouse,
                                      const std::string& patient_id,
                                      Timestamp inference_time);

}  // namespace clinloop::features

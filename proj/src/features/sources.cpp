#include "clinloop/features/sources.hpp"

#include <algorithm>

namespace clinloop::features {

namespace {

void sort_coded(std::vector<PatientHistory::CodedEvent>& v) {
  std::sort(v.begin(), v.end(),
            [](const PatientHistory::CodedEvent& a,
               const PatientHistory::CodedEvent& b) {
              if (a.effective_time != b.effective_time)
                return a.effective_time < b.effective_time;
              return a.code < b.code;
            });
}

void sort_labs(std::vector<PatientHistory::LabEvent>& v) {
  std::sort(v.begin(), v.end(),
            [](const PatientHistory::LabEvent& a,
               const PatientHistory::LabEvent& b) {
              if (a.effective_time != b.effective_time)
                return a.effective_time < b.effective_time;
              if (a.code != b.code) return a.code < b.code;
              return a.numeric_value < b.numeric_value;
            });
}

}  // namespace

void PatientHistory::canonical_sort() {
  sort_coded(conditions);
  sort_coded(medications);
  sort_labs(labs);
}

PatientHistory fetch_history_transactional(emr::EmrClient& client,
                                           const std::string& patient_id,
                                           Timestamp inference_time) {
  const Timestamp t = inference_time;
  const emr::PatientRecord rec = client.patient(patient_id);

  PatientHistory h;
  h.inference_time = t;
  h.demographics.age_at_inference = age_years(rec.birth_date, t);
  h.demographics.sex = rec.sex;
  h.demographics.race = rec.race;

  for (const auto& c : client.conditions(patient_id)) {
    if (c.effective_time < t) h.conditions.push_back({c.code, c.effective_time});
  }
  for (const auto& m :
       client.medications(patient_id, t - days(kMedicationWindowDays))) {
    if (m.effective_time < t &&
        t - m.effective_time <= days(kMedicationWindowDays)) {
      h.medications.push_back({m.code, m.effective_time});
    }
  }
  for (const auto& o : client.observations(patient_id, t - days(kLabWindowDays))) {
    if (o.effective_time < t && t - o.effective_time <= days(kLabWindowDays)) {
      h.labs.push_back({o.component_code, o.value, o.effective_time});
    }
  }
  h.canonical_sort();
  return h;
}

PatientHistory load_history_warehouse(const emr::WarehouseData& warehouse,
                                      const std::string& patient_id,
                                      Timestamp inference_time) {
  const emr::PatientRecord* rec = warehouse.find_patient(patient_id);
  if (rec == nullptr) throw NotFoundError("patient '" + patient_id + "'");

  const Timestamp t = inference_time;
  PatientHistory h;
  h.inference_time = t;
  h.demographics.age_at_inference = age_years(rec->birth_date, t);
  h.demographics.sex = rec->sex;
  h.demographics.race = rec->race;

  for (const auto& e : warehouse.events_for(patient_id)) {
    if (e.effective_time >= t) continue;
    switch (e.kind) {
      case emr::EventKind::Condition:
        h.conditions.push_back({e.code, e.effective_time});
        break;
      case emr::EventKind::Medication:
        if (t - e.effective_time <= days(kMedicationWindowDays)) {
          h.medications.push_back({e.code, e.effective_time});
        }
        break;
      case emr::EventKind::LabResult:
        if (t - e.effective_time <= days(kLabWindowDays)) {
          h.labs.push_back({e.code, e.numeric_value.value_or(0.0),
                            e.effective_time});
        }
        break;
    }
  }
  h.canonical_sort();
  return h;
}

}  // namespace clinloop::features

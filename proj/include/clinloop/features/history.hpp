#pragma once

#include <string>
#include <vector>

#include "clinloop/emr/types.hpp"
#include "clinloop/time_util.hpp"

namespace clinloop::features {

// A patient's event timeline as both adapters produce it: warehouse rows at
// train time, transactional API at inference time. Nothing here reveals
// which adapter built it; parity between the two is the pipeline's central
// guarantee. Every effective_time is strictly before inference_time, and
// medications/labs are already cut to their lookback windows.
struct PatientHistory {
  struct Demographics {
    double age_at_inference = 0.0;  // real years
    emr::Sex sex = emr::Sex::Unknown;
    emr::Race race = emr::Race::Unknown;
  };
  struct CodedEvent {
    std::string code;
    Timestamp effective_time = 0;

    bool operator==(const CodedEvent&) const = default;
  };
  struct LabEvent {
    std::string code;
    double numeric_value = 0.0;
    Timestamp effective_time = 0;

    bool operator==(const LabEvent&) const = default;
  };

  Demographics demographics;
  std::vector<CodedEvent> conditions;
  std::vector<CodedEvent> medications;
  std::vector<LabEvent> labs;
  Timestamp inference_time = 0;

  // (effective_time, code, value) order so adapter row order never matters.
  void canonical_sort();

  bool operator==(const PatientHistory& other) const {
    return demographics.age_at_inference == other.demographics.age_at_inference &&
           demographics.sex == other.demographics.sex &&
           demographics.race == other.demographics.race &&
           conditions == other.conditions && medications == other.medications &&
           labs == other.labs && inference_time == other.inference_time;
  }
};

constexpr int kMedicationWindowDays = 28;
constexpr int kLabWindowDays = 14;

}  // namespace clinloop::features

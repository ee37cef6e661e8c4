#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clinloop/errors.hpp"
#include "clinloop/time_util.hpp"

namespace clinloop::emr {

enum class Sex { Female, Male, Unknown };

enum class Race {
  White,
  Other,
  Asian,
  Black,
  Unknown,
  PacificIslander,
  NativeAmerican
};

enum class EventKind { Condition, Medication, LabResult };

enum class PanelCode { CBC, METABOLIC, MAGNESIUM };

std::string to_string(Sex s);
std::string to_string(Race r);
std::string to_string(EventKind k);
std::string to_string(PanelCode p);

Sex sex_from_string(const std::string& s);
Race race_from_string(const std::string& s);
EventKind event_kind_from_string(const std::string& s);
PanelCode panel_from_string(const std::string& s);

// Component codes per panel: CBC resolves 4 components, METABOLIC 7,
// MAGNESIUM 1.
const std::vector<std::string>& panel_components(PanelCode p);
std::vector<PanelCode> all_panels();

struct PatientRecord {
  std::string patient_id;
  Timestamp birth_date = 0;  // midnight UTC
  Sex sex = Sex::Unknown;
  Race race = Race::Unknown;
  std::string unit_id;
};

struct ClinicalEvent {
  std::string patient_id;
  EventKind kind = EventKind::Condition;
  std::string code;
  std::optional<double> numeric_value;  // LabResult only
  std::optional<bool> abnormal;         // LabResult only
  Timestamp effective_time = 0;
};

struct DiagnosticOrder {
  std::string order_id;
  std::string patient_id;
  PanelCode panel_code = PanelCode::CBC;
  std::vector<std::string> component_codes;
  Timestamp order_time = 0;
};

struct LabResult {
  std::string order_id;
  std::string component_code;
  double value = 0.0;
  double ref_low = 0.0;
  double ref_high = 0.0;
  bool abnormal = false;
  Timestamp result_time = 0;
};

struct DriftConfig {
  Timestamp start_time = 0;
  // Added to the severity mean for facts generated at or after start_time.
  double covariate_shift = 0.0;
  // Per-component delta on abnormal log-odds, realized as a value mean shift.
  std::map<std::string, double> prevalence_shift;
  // Scale applied to the feature-label coupling at or after start_time.
  double concept_shift = 1.0;
};

struct WorldConfig {
  std::uint64_t seed = 1;
  int n_patients = 1000;
  int condition_vocab_size = 200;
  int medication_vocab_size = 100;
  double signal_strength = 1.0;
  Duration result_delay = hours(2);
  // Multiplier on the encounter rate inside the live-simulation window
  // [history_end, sim_horizon); lets a short virtual run accumulate a
  // prospective cohort of useful size.
  double sim_rate = 1.0;
  // Auto-generated clinical history covers [history_start, history_end);
  // condition/medication background extends to sim_horizon so that live
  // inference windows stay populated.
  Timestamp history_start = 1420070400;  // 2015-01-01T00:00:00Z
  Timestamp history_end = 1640995200;    // 2022-01-01T00:00:00Z
  Timestamp sim_horizon = 1672531200;    // 2023-01-01T00:00:00Z
  std::optional<DriftConfig> drift;

  void validate() const {
    if (n_patients < 1) throw ValidationError("n_patients must be >= 1");
    if (condition_vocab_size < 1 || medication_vocab_size < 1) {
      throw ValidationError("vocab sizes must be >= 1");
    }
    if (signal_strength < 0.0) {
      throw ValidationError("signal_strength must be >= 0");
    }
    if (result_delay < 0) throw ValidationError("result_delay must be >= 0");
  }
};

}  // namespace clinloop::emr

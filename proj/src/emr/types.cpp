#include "clinloop/emr/types.hpp"

namespace clinloop::emr {

std::string to_string(Sex s) {
  switch (s) {
    case Sex::Female: return "Female";
    case Sex::Male: return "Male";
    case Sex::Unknown: return "Unknown";
  }
  return "Unknown";
}

std::string to_string(Race r) {
  switch (r) {
    case Race::White: return "White";
    case Race::Other: return "Other";
    case Race::Asian: return "Asian";
    case Race::Black: return "Black";
    case Race::Unknown: return "Unknown";
    case Race::PacificIslander: return "PacificIslander";
    case Race::NativeAmerican: return "NativeAmerican";
  }
  return "Unknown";
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::Condition: return "Condition";
    case EventKind::Medication: return "Medication";
    case EventKind::LabResult: return "LabResult";
  }
  return "Condition";
}

std::string to_string(PanelCode p) {
  switch (p) {
    case PanelCode::CBC: return "CBC";
    case PanelCode::METABOLIC: return "METABOLIC";
    case PanelCode::MAGNESIUM: return "MAGNESIUM";
  }
  return "CBC";
}

Sex sex_from_string(const std::string& s) {
  if (s == "Female") return Sex::Female;
  if (s == "Male") return Sex::Male;
  if (s == "Unknown") return Sex::Unknown;
  throw ValidationError("unknown sex: '" + s + "'");
}

Race race_from_string(const std::string& s) {
  if (s == "White") return Race::White;
  if (s == "Other") return Race::Other;
  if (s == "Asian") return Race::Asian;
  if (s == "Black") return Race::Black;
  if (s == "Unknown") return Race::Unknown;
  if (s == "PacificIslander") return Race::PacificIslander;
  if (s == "NativeAmerican") return Race::NativeAmerican;
  throw ValidationError("unknown race: '" + s + "'");
}

EventKind event_kind_from_string(const std::string& s) {
  if (s == "Condition") return EventKind::Condition;
  if (s == "Medication") return EventKind::Medication;
  if (s == "LabResult") return EventKind::LabResult;
  throw ValidationError("unknown event kind: '" + s + "'");
}

PanelCode panel_from_string(const std::string& s) {
  if (s == "CBC") return PanelCode::CBC;
  if (s == "METABOLIC") return PanelCode::METABOLIC;
  if (s == "MAGNESIUM") return PanelCode::MAGNESIUM;
  throw ValidationError("unknown panel: '" + s + "'");
}

const std::vector<std::string>& panel_components(PanelCode p) {
  static const std::vector<std::string> cbc = {"HCT", "HGB", "WBC", "PLT"};
  static const std::vector<std::string> metabolic = {"ALB", "BUN", "CA", "CO2",
                                                     "CRE", "K",   "NA"};
  static const std::vector<std::string> magnesium = {"MG"};
  switch (p) {
    case PanelCode::CBC: return cbc;
    case PanelCode::METABOLIC: return metabolic;
    case PanelCode::MAGNESIUM: return magnesium;
  }
  return cbc;
}

std::vector<PanelCode> all_panels() {
  return {PanelCode::CBC, PanelCode::METABOLIC, PanelCode::MAGNESIUM};
}

}  // namespace clinloop::emr

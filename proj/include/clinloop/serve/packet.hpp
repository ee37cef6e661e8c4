#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clinloop/emr/types.hpp"
#include "clinloop/features/featurize.hpp"

#include "json.hpp"

namespace clinloop::serve {

enum class Arm { Display, Suppress };

std::string to_string(Arm a);
Arm arm_from_string(const std::string& s);

enum class RouteKind { ScoreColumn, Flowsheet, Inbasket, Alert };

std::string to_string(RouteKind r);
RouteKind route_from_string(const std::string& s);

struct RoutedAction {
  RouteKind route = RouteKind::ScoreColumn;
  bool ok = false;

  bool operator==(const RoutedAction&) const = default;
};

// One inference, persisted in full: identifiers, feature snapshot, score,
// randomization arm and routing outcome. Immutable once appended; the label
// arrives later as a separate update record.
struct InferencePacket {
  std::string packet_id;
  std::string model_id;
  std::string patient_id;
  std::optional<std::string> order_id;  // absent for timer triggers
  Timestamp inference_time = 0;
  features::FeatureVector features;
  double score = 0.0;
  Arm arm = Arm::Display;
  std::uint64_t arm_draw_index = 0;
  std::vector<RoutedAction> routed;
  int oov_count = 0;

  // Merged from label updates at read time; never set at creation.
  std::optional<bool> label;
  std::optional<Timestamp> label_time;

  nlohmann::json to_json() const;
  static InferencePacket from_json(const nlohmann::json& j);
};

// Label pairing record; demographics are resolved from the EMR at
// extraction time for subgroup reporting.
struct LabelUpdate {
  std::string packet_id;
  bool label = false;
  Timestamp label_time = 0;
  emr::Sex sex = emr::Sex::Unknown;
  emr::Race race = emr::Race::Unknown;
  bool age_over_40 = false;

  nlohmann::json to_json() const;
  static LabelUpdate from_json(const nlohmann::json& j);
};

}  // namespace clinloop::serve

#include "clinloop/serve/packet.hpp"

namespace clinloop::serve {

using nlohmann::json;

std::string to_string(Arm a) {
  return a == Arm::Display ? "display" : "suppress";
}

Arm arm_from_string(const std::string& s) {
  if (s == "display") return Arm::Display;
  if (s == "suppress") return Arm::Suppress;
  throw ValidationError("unknown arm '" + s + "'");
}

std::string to_string(RouteKind r) {
  switch (r) {
    case RouteKind::ScoreColumn: return "score_column";
    case RouteKind::Flowsheet: return "flowsheet";
    case RouteKind::Inbasket: return "inbasket";
    case RouteKind::Alert: return "alert";
  }
  return "score_column";
}

RouteKind route_from_string(const std::string& s) {
  if (s == "score_column") return RouteKind::ScoreColumn;
  if (s == "flowsheet") return RouteKind::Flowsheet;
  if (s == "inbasket") return RouteKind::Inbasket;
  if (s == "alert") return RouteKind::Alert;
  throw ValidationError("unknown route '" + s + "'");
}

json InferencePacket::to_json() const {
  json feats = json::object();
  for (const auto& [idx, count] : features.entries) {
    feats[std::to_string(idx)] = count;
  }
  json routed_j = json::array();
  for (const auto& r : routed) {
    routed_j.push_back({{"route", to_string(r.route)}, {"ok", r.ok}});
  }
  json j = {{"kind", "packet"},
            {"packet_id", packet_id},
            {"model_id", model_id},
            {"patient_id", patient_id},
            {"inference_time", format_rfc3339(inference_time)},
            {"features", feats},
            {"vocab_fingerprint", features.vocab_fingerprint},
            {"score", score},
            {"arm", to_string(arm)},
            {"arm_draw_index", arm_draw_index},
            {"routed", routed_j},
            {"oov_count", oov_count}};
  if (order_id) j["order_id"] = *order_id;
  return j;
}

InferencePacket InferencePacket::from_json(const json& j) {
  InferencePacket p;
  p.packet_id = j.at("packet_id").get<std::string>();
  p.model_id = j.at("model_id").get<std::string>();
  p.patient_id = j.at("patient_id").get<std::string>();
  if (j.contains("order_id")) p.order_id = j.at("order_id").get<std::string>();
  p.inference_time = parse_rfc3339(j.at("inference_time").get<std::string>());
  for (const auto& [key, val] : j.at("features").items()) {
    p.features.entries[std::stoi(key)] = val.get<int>();
  }
  p.features.vocab_fingerprint = j.at("vocab_fingerprint").get<std::uint64_t>();
  p.score = j.at("score").get<double>();
  p.arm = arm_from_string(j.at("arm").get<std::string>());
  p.arm_draw_index = j.at("arm_draw_index").get<std::uint64_t>();
  for (const auto& r : j.at("routed")) {
    p.routed.push_back({route_from_string(r.at("route").get<std::string>()),
                        r.at("ok").get<bool>()});
  }
  p.oov_count = j.at("oov_count").get<int>();
  return p;
}

json LabelUpdate::to_json() const {
  return {{"kind", "label_update"},
          {"packet_id", packet_id},
          {"label", label},
          {"label_time", format_rfc3339(label_time)},
          {"sex", emr::to_string(sex)},
          {"race", emr::to_string(race)},
          {"age_over_40", age_over_40}};
}

LabelUpdate LabelUpdate::from_json(const json& j) {
  LabelUpdate u;
  u.packet_id = j.at("packet_id").get<std::string>();
  u.label = j.at("label").get<bool>();
  u.label_time = parse_rfc3339(j.at("label_time").get<std::string>());
  u.sex = emr::sex_from_string(j.at("sex").get<std::string>());
  u.race = emr::race_from_string(j.at("race").get<std::string>());
  u.age_over_40 = j.at("age_over_40").get<bool>();
  return u;
}

}  // namespace clinloop::serve

#include "clinloop/pipeline/config.hpp"

#include <algorithm>
#include <cctype>

#include "clinloop/numfmt.hpp"

namespace clinloop::pipeline {

using nlohmann::json;

Duration parse_duration(const std::string& text) {
  if (text.empty()) throw ValidationError("empty duration");
  std::int64_t mult = 1;
  std::string digits = text;
  switch (text.back()) {
    case 's': mult = 1; digits.pop_back(); break;
    case 'm': mult = kMinute; digits.pop_back(); break;
    case 'h': mult = kHour; digits.pop_back(); break;
    case 'd': mult = kDay; digits.pop_back(); break;
    default:
      if (!std::isdigit(static_cast<unsigned char>(text.back()))) {
        throw ValidationError("bad duration '" + text + "'");
      }
  }
  return parse_i64(digits) * mult;
}

json world_config_to_json(const emr::WorldConfig& c) {
  json j = {{"seed", c.seed},
            {"n_patients", c.n_patients},
            {"condition_vocab_size", c.condition_vocab_size},
            {"medication_vocab_size", c.medication_vocab_size},
            {"signal_strength", c.signal_strength},
            {"result_delay_seconds", c.result_delay},
            {"sim_rate", c.sim_rate},
            {"history_start", format_rfc3339(c.history_start)},
            {"history_end", format_rfc3339(c.history_end)},
            {"sim_horizon", format_rfc3339(c.sim_horizon)}};
  if (c.drift) {
    json shifts = json::object();
    for (const auto& [code, delta] : c.drift->prevalence_shift) {
      shifts[code] = delta;
    }
    j["drift"] = {{"start_time", format_rfc3339(c.drift->start_time)},
                  {"covariate_shift", c.drift->covariate_shift},
                  {"prevalence_shift", shifts},
                  {"concept_shift", c.drift->concept_shift}};
  }
  return j;
}

emr::WorldConfig world_config_from_json(const json& j) {
  emr::WorldConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_patients = j.at("n_patients").get<int>();
  c.condition_vocab_size = j.at("condition_vocab_size").get<int>();
  c.medication_vocab_size = j.at("medication_vocab_size").get<int>();
  c.signal_strength = j.at("signal_strength").get<double>();
  c.result_delay = j.at("result_delay_seconds").get<Duration>();
  c.sim_rate = j.value("sim_rate", 1.0);
  c.history_start = parse_rfc3339(j.at("history_start").get<std::string>());
  c.history_end = parse_rfc3339(j.at("history_end").get<std::string>());
  c.sim_horizon = parse_rfc3339(j.at("sim_horizon").get<std::string>());
  if (j.contains("drift")) {
    emr::DriftConfig d;
    const auto& dj = j.at("drift");
    d.start_time = parse_rfc3339(dj.at("start_time").get<std::string>());
    d.covariate_shift = dj.at("covariate_shift").get<double>();
    d.concept_shift = dj.at("concept_shift").get<double>();
    for (const auto& [code, delta] : dj.at("prevalence_shift").items()) {
      d.prevalence_shift[code] = delta.get<double>();
    }
    c.drift = d;
  }
  return c;
}

Config Config::defaults() {
  Config c;
  // WorldConfig field defaults are already desk-scale; fill the horizon
  // fields the generator would otherwise infer so the document is explicit.
  c.world.history_start = parse_rfc3339("2015-01-01T00:00:00Z");
  c.world.history_end = parse_rfc3339("2022-01-01T00:00:00Z");
  c.world.sim_horizon = parse_rfc3339("2023-01-01T00:00:00Z");
  c.trigger.trigger = serve::TriggerConfig::EventTrigger{emr::PanelCode::CBC};
  c.trigger.mode = serve::TriggerConfig::Mode::Silent;
  return c;
}

std::string Config::resolved_model_id() const {
  if (!train.model_id.empty()) return train.model_id;
  std::string id = emr::to_string(train.panel) + "_" + train.component;
  std::transform(id.begin(), id.end(), id.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  return id;
}

json Config::to_json() const {
  json hp = {{"n_trees", train.hyperparams.n_trees},
             {"max_depth", train.hyperparams.max_depth},
             {"min_leaf", train.hyperparams.min_leaf},
             {"mtry", train.hyperparams.mtry}};
  return {{"format_version", 1},
          {"world", world_config_to_json(world)},
          {"train",
           {{"panel", emr::to_string(train.panel)},
            {"component", train.component},
            {"per_year", train.per_year},
            {"years", train.years},
            {"hyperparams", hp},
            {"model_id", train.model_id}}},
          {"trigger", trigger.to_json()},
          {"monitor",
           {{"bootstrap_B", monitor.bootstrap_B},
            {"ci_level", monitor.ci_level},
            {"bootstrap_seed", monitor.bootstrap_seed},
            {"drift_k", monitor.drift_k},
            {"drift_min_baseline_occurrences",
             monitor.drift_min_baseline_occurrences},
            {"extractor_cron", monitor.extractor_cron},
            {"maturation_seconds", monitor.maturation}}},
          {"sim", {{"duration_seconds", sim.duration}}}};
}

Config Config::from_json(const json& j) {
  Config c = Config::defaults();
  if (j.contains("world")) c.world = world_config_from_json(j.at("world"));
  if (j.contains("train")) {
    const auto& t = j.at("train");
    if (t.contains("panel")) {
      c.train.panel = emr::panel_from_string(t.at("panel").get<std::string>());
    }
    if (t.contains("component")) {
      c.train.component = t.at("component").get<std::string>();
    }
    if (t.contains("per_year")) c.train.per_year = t.at("per_year").get<int>();
    if (t.contains("years")) {
      c.train.years = t.at("years").get<std::vector<int>>();
    }
    if (t.contains("hyperparams")) {
      const auto& hp = t.at("hyperparams");
      c.train.hyperparams.n_trees = hp.value("n_trees", 100);
      c.train.hyperparams.max_depth = hp.value("max_depth", 12);
      c.train.hyperparams.min_leaf = hp.value("min_leaf", 5);
      c.train.hyperparams.mtry = hp.value("mtry", 0);
    }
    if (t.contains("model_id")) {
      c.train.model_id = t.at("model_id").get<std::string>();
    }
  }
  if (j.contains("trigger")) {
    c.trigger = serve::TriggerConfig::from_json(j.at("trigger"));
  }
  if (j.contains("monitor")) {
    const auto& m = j.at("monitor");
    c.monitor.bootstrap_B = m.value("bootstrap_B", 1000);
    c.monitor.ci_level = m.value("ci_level", 0.95);
    c.monitor.bootstrap_seed = m.value("bootstrap_seed", std::uint64_t{17});
    c.monitor.drift_k = m.value("drift_k", 4.0);
    c.monitor.drift_min_baseline_occurrences =
        m.value("drift_min_baseline_occurrences", 10.0);
    c.monitor.extractor_cron = m.value("extractor_cron", "0 0 * * *");
    c.monitor.maturation = m.value("maturation_seconds", hours(2));
  }
  if (j.contains("sim")) {
    c.sim.duration = j.at("sim").value("duration_seconds", days(30));
  }
  return c;
}

}  // namespace clinloop::pipeline

#pragma once

#include <string>
#include <vector>

#include "clinloop/emr/types.hpp"
#include "clinloop/model/forest.hpp"
#include "clinloop/serve/engine.hpp"

#include "json.hpp"

namespace clinloop::pipeline {

struct TrainConfig {
  emr::PanelCode panel = emr::PanelCode::CBC;
  std::string component = "HCT";
  int per_year = 2000;
  std::vector<int> years = {2015, 2016, 2017, 2018, 2019, 2020, 2021};
  model::ForestHyperparams hyperparams;
  std::string model_id;  // empty => "<panel>_<component>" lowercased
};

struct MonitorConfig {
  int bootstrap_B = 1000;
  double ci_level = 0.95;
  std::uint64_t bootstrap_seed = 17;
  double drift_k = 4.0;
  double drift_min_baseline_occurrences = 10.0;
  std::string extractor_cron = "0 0 * * *";  // daily during a run
  Duration maturation = hours(2);
};

struct SimConfig {
  Duration duration = days(30);
};

// The one versioned configuration document the CLI consumes; every field has
// a default so `demo --seed N` works with no file at all.
struct Config {
  emr::WorldConfig world;
  TrainConfig train;
  serve::TriggerConfig trigger;  // defaults: silent event trigger on CBC
  MonitorConfig monitor;
  SimConfig sim;

  static Config defaults();

  std::string resolved_model_id() const;

  nlohmann::json to_json() const;
  static Config from_json(const nlohmann::json& j);
};

nlohmann::json world_config_to_json(const emr::WorldConfig& c);
emr::WorldConfig world_config_from_json(const nlohmann::json& j);

// "45m", "12h", "30d", "90s" (bare numbers are seconds).
Duration parse_duration(const std::string& text);

}  // namespace clinloop::pipeline

#pragma once

#include <filesystem>

#include "clinloop/emr/warehouse.hpp"
#include "clinloop/emr/world.hpp"
#include "clinloop/model/bundle.hpp"
#include "clinloop/model/cohort.hpp"
#include "clinloop/monitor/drift.hpp"
#include "clinloop/monitor/labels.hpp"
#include "clinloop/monitor/metrics.hpp"
#include "clinloop/monitor/report.hpp"
#include "clinloop/pipeline/config.hpp"
#include "clinloop/serve/store.hpp"

namespace clinloop::pipeline {

// ---- train ----

struct TrainOutput {
  model::ModelBundle bundle;
  monitor::DriftBaseline baseline;
  std::vector<monitor::LabeledSample> retro_test_samples;
  Timestamp test_window_start = 0;
  Timestamp test_window_end = 0;
  std::size_t cohort_rows = 0;
  int dropped_missing_result = 0;
  bool threshold_degenerate = false;
};

// Cohort -> vocabulary (train years only) -> forest -> Youden threshold on
// the validation year -> retrospective test evaluation + drift baseline.
TrainOutput train_task(const emr::WarehouseData& warehouse,
                       const TrainConfig& config, std::uint64_t seed);

// eval.json: the retrospective evaluation artifact consumed by `report`
// (test samples, window, threshold and the drift baseline).
void save_eval(const TrainOutput& out, const std::filesystem::path& path);

struct EvalArtifact {
  std::string model_id;
  double threshold = 0.5;
  Timestamp window_start = 0;
  Timestamp window_end = 0;
  std::vector<monitor::LabeledSample> samples;
  monitor::DriftBaseline baseline;
};

EvalArtifact load_eval(const std::filesystem::path& path);

// ---- run-sim ----

struct DeploymentSpec {
  model::ModelBundle bundle;
  serve::TriggerConfig trigger;
};

struct SimResult {
  Timestamp sim_start = 0;
  Timestamp sim_end = 0;
  std::size_t orders_signed = 0;
  std::size_t orders_matching_panel = 0;  // first deployment's event panel
  serve::ServeEngine::Counters counters;
  std::size_t callback_failures = 0;
  int labels_extracted_in_run = 0;
};

// The live trial: EMR HTTP service + serving engine in one process, a
// virtual clock stepping through the world's planned order arrivals, webhook
// dispatch over real sockets, cron timers and scheduled label extraction.
// Each signed order is appended to orders_log (one JSON line) so later
// stages can rebuild the post-run world by replay. A wall_time_scale > 0
// paces the loop against real time at that many virtual seconds per wall
// second (CLI-only mode); 0 runs as fast as possible.
SimResult run_sim(emr::World& world,
                  const std::vector<DeploymentSpec>& deployments,
                  serve::PacketStore& store, const MonitorConfig& monitor,
                  Duration duration, const std::filesystem::path& orders_log,
                  double wall_time_scale = 0.0);

// ---- extract-labels ----

// Rebuilds the post-run world by regenerating from config and re-signing the
// logged orders (results are keyed by order id, so the replay is
// bit-identical), then runs the extractor against an ephemeral EMR service
// at now = last order + maturation.
monitor::LabelExtractor::Outcome extract_labels_replay(
    const emr::WorldConfig& world_config,
    const std::filesystem::path& orders_log, serve::PacketStore& store,
    const std::string& model_id, const std::string& component_code,
    Duration maturation);

// ---- report ----

struct ReportOutput {
  monitor::MetricReport retrospective;
  monitor::MetricReport prospective;
  std::vector<monitor::DriftReport> drift;
  monitor::ReportFiles files;
};

ReportOutput report_stage(const EvalArtifact& eval, serve::PacketStore& store,
                          const model::ModelBundle& bundle,
                          const MonitorConfig& monitor,
                          const std::filesystem::path& out_dir);

// Labeled packets as metric samples (demographics come from the label
// updates).
std::vector<monitor::LabeledSample> prospective_samples(
    const serve::PacketStore::ReadResult& read);

// ---- manifest ----

std::uint64_t file_digest(const std::filesystem::path& path);

class Manifest {
 public:
  static Manifest open(const std::filesystem::path& dir);
  void record_stage(const std::string& stage, const nlohmann::json& detail);
  void save() const;
  const nlohmann::json& doc() const { return doc_; }

 private:
  std::filesystem::path path_;
  nlohmann::json doc_;
};

}  // namespace clinloop::pipeline

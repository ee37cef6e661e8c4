#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "clinloop/emr/types.hpp"
#include "clinloop/rng.hpp"

#include "json.hpp"

namespace clinloop::emr {

struct CodeAt {
  std::string code;
  Timestamp effective_time = 0;
};

struct LabObservation {
  std::string order_id;
  std::string component_code;
  double value = 0.0;
  bool abnormal = false;
  Timestamp effective_time = 0;  // result availability time
};

struct PlannedOrder {
  std::string patient_id;
  PanelCode panel_code = PanelCode::CBC;
  Timestamp order_time = 0;
};

enum class WritebackTarget { ScoreColumn, Flowsheet, Inbasket };

std::string to_string(WritebackTarget t);

struct WritebackEntry {
  nlohmann::json payload;
  Timestamp received_at = 0;
};

struct AlertLogEntry {
  std::string order_id;
  std::string body;
  Timestamp received_at = 0;
};

struct CallbackFailure {
  std::string url;
  std::string order_id;
  std::string error;
};

// Outbound HTTP used for order-signature callbacks; injected so tests can
// fake transport failures.
class WebhookPoster {
 public:
  virtual ~WebhookPoster() = default;
  struct Result {
    bool ok = false;
    std::string body;
    std::string error;
  };
  virtual Result post(const std::string& url, const nlohmann::json& payload) = 0;
};

// Per-component value model parameters, fixed at world creation.
struct ComponentModel {
  double mu = 0.0;
  double sigma = 1.0;
  double beta = 1.0;  // severity coupling weight
  double ref_low = 0.0;
  double ref_high = 0.0;
};

// The simulated EMR: transactional store, webhook dispatch, write-back logs
// and the generative patient model behind order results. Plays the warehouse
// role too via export_warehouse. HTTP handlers may call read methods
// concurrently; every mutation serializes through the internal writer lock.
class World {
 public:
  explicit World(WorldConfig config);

  const WorldConfig& config() const { return config_; }

  // ---- reads; `now` enforces temporal hygiene (no future facts) ----
  std::optional<PatientRecord> patient(const std::string& patient_id) const;
  std::vector<CodeAt> conditions(const std::string& patient_id,
                                 Timestamp now) const;
  std::vector<CodeAt> medications(const std::string& patient_id,
                                  Timestamp since, Timestamp now) const;
  std::vector<LabObservation> observations(const std::string& patient_id,
                                           Timestamp since,
                                           Timestamp now) const;
  std::optional<LabObservation> observation_for_order(
      const std::string& order_id, const std::string& component,
      Timestamp now) const;
  std::vector<std::string> unit_roster(const std::string& unit_id) const;
  std::vector<std::string> unit_ids() const;

  bool has_patient(const std::string& patient_id) const;
  std::vector<std::string> patient_ids() const;
  std::size_t n_orders() const;
  std::vector<DiagnosticOrder> orders_snapshot() const;

  // ---- clinical actions ----
  // Persists the order, schedules one LabResult per panel component at
  // order_time + result_delay, then dispatches one callback per matching
  // subscription (at-most-once; failures logged, order kept). An alert
  // document in a callback response body is recorded in the alert log.
  DiagnosticOrder sign_order(const std::string& patient_id, PanelCode panel,
                             Timestamp time, WebhookPoster* poster = nullptr);

  int add_subscription(PanelCode panel, const std::string& callback_url);

  // Appends to the target log; payload must name an existing patient.
  void apply_writeback(WritebackTarget target, const nlohmann::json& payload,
                       Timestamp now);

  // ---- logs (queryable for tests and the report stage) ----
  std::vector<WritebackEntry> writeback_log(WritebackTarget target) const;
  std::vector<AlertLogEntry> alert_log() const;
  std::vector<CallbackFailure> callback_failures() const;
  std::size_t callbacks_dispatched() const;

  // Orders the generator scheduled for the live-simulation window; the sim
  // driver signs these as scripted clinician actions.
  const std::vector<PlannedOrder>& planned_sim_orders() const {
    return planned_sim_orders_;
  }

  const std::map<std::string, ComponentModel>& component_models() const {
    return components_;
  }

 private:
  friend struct WorldBuilder;

  struct PatientData {
    PatientRecord record;
    double severity = 0.0;
    std::vector<CodeAt> conditions;    // sorted by effective_time
    std::vector<CodeAt> medications;   // sorted by effective_time
    std::vector<LabObservation> labs;  // sorted by effective_time
  };

  int patient_index(const std::string& patient_id) const;  // -1 when absent
  LabResult make_result_locked(const PatientData& p, const std::string& order_id,
                               const std::string& component,
                               Timestamp order_time) const;

  WorldConfig config_;
  std::map<std::string, ComponentModel> components_;

  std::vector<PatientData> patients_;
  std::map<std::string, int> patient_index_;
  std::map<std::string, std::vector<std::string>> units_;

  std::vector<DiagnosticOrder> orders_;
  std::map<std::string, int> order_index_;
  std::vector<std::vector<LabResult>> order_results_;
  std::int64_t next_order_seq_ = 1;

  struct Subscription {
    int id;
    PanelCode panel;
    std::string url;
  };
  std::vector<Subscription> subscriptions_;
  int next_subscription_id_ = 1;

  std::vector<WritebackEntry> score_log_;
  std::vector<WritebackEntry> flowsheet_log_;
  std::vector<WritebackEntry> inbasket_log_;
  std::vector<AlertLogEntry> alert_log_;
  std::vector<CallbackFailure> callback_failures_;
  std::size_t callbacks_dispatched_ = 0;

  std::vector<PlannedOrder> planned_sim_orders_;

  mutable std::shared_mutex mu_;
};

// Deterministic world construction from config (the generate_world
// operation). Same config, same bytes.
std::unique_ptr<World> generate_world(const WorldConfig& config);

}  // namespace clinloop::emr

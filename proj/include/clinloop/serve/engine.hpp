#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <thread>
#include <variant>
#include <vector>

#include "clinloop/clock.hpp"
#include "clinloop/emr/client.hpp"
#include "clinloop/model/bundle.hpp"
#include "clinloop/serve/cron.hpp"
#include "clinloop/serve/store.hpp"

namespace httplib {
class Server;
}

namespace clinloop::serve {

struct TriggerConfig {
  struct EventTrigger {
    emr::PanelCode panel_code = emr::PanelCode::CBC;
  };
  struct TimerTrigger {
    std::string cron_expr;
    std::string unit_id;
  };

  enum class Mode { Silent, Loud };

  std::variant<EventTrigger, TimerTrigger> trigger = EventTrigger{};
  Mode mode = Mode::Silent;
  std::vector<RouteKind> routes;  // ignored in Silent mode
  double randomization_p = 0.0;   // probability of the Suppress arm
  std::uint64_t rng_seed = 0;

  // Loud mode requires at least one route; cron expressions must parse;
  // p must lie in [0,1].
  void validate() const;

  nlohmann::json to_json() const;
  static TriggerConfig from_json(const nlohmann::json& j);
};

// The Suppress/Display draw is a pure function of (seed, draw index), so a
// recorded sequence replays exactly from the packet metadata.
double arm_draw_u(std::uint64_t seed, std::uint64_t draw_index);
Arm assign_arm(std::uint64_t seed, std::uint64_t draw_index, double p);

struct Deployment {
  std::string model_id;
  model::ModelBundle bundle;
  TriggerConfig config;
  std::string endpoint_path;
  std::optional<int> subscription_id;  // event triggers, when wired to HTTP
  std::optional<CronExpr> schedule;    // timer triggers
  Timestamp next_fire = 0;

  enum class Status { Active, Paused };
  Status status = Status::Active;

  std::atomic<std::uint64_t> arm_counter{0};
};

// The deployment runtime: hosts POST /models/{id}/infer, subscribes event
// triggers to the EMR, drives cron schedules against the injected clock,
// executes fetch -> featurize -> infer -> randomize -> route and persists
// packets. Pipelines either complete fully or append nothing.
class ServeEngine {
 public:
  ServeEngine(emr::EmrClient& emr, PacketStore& store, const Clock& clock);
  ~ServeEngine();

  // Optional HTTP face; event deployments registered after start() get an
  // EMR subscription pointing at the live endpoint. Without start(),
  // handle_event serves direct in-process calls.
  void start(int port = 0);
  void stop();
  int port() const { return port_; }
  std::string base_url() const;

  Deployment& register_deployment(model::ModelBundle bundle,
                                  TriggerConfig config);
  // Barrier: once this returns no new pipeline starts for the model.
  void pause(const std::string& model_id);

  struct EventRequest {
    std::string patient_id;
    std::string order_id;
    emr::PanelCode panel_code = emr::PanelCode::CBC;
    Timestamp order_time = 0;
  };

  struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
  };

  Response handle_event(const std::string& model_id, const EventRequest& req);

  // Batch inference over the configured unit roster when the cron matches
  // `now`; per-patient failures are counted and skipped, a roster failure
  // skips the whole tick.
  std::vector<std::string> run_timer_tick(const std::string& model_id,
                                          Timestamp now);

  // Fires every due timer schedule in chronological order up to `now`.
  void advance_to(Timestamp now);

  struct Counters {
    std::size_t callbacks_received = 0;
    std::size_t packets_appended = 0;
    std::size_t roster_hits = 0;
    std::size_t fetch_errors = 0;
    std::size_t vocab_errors = 0;
    std::size_t patient_errors = 0;
    std::size_t tick_skips = 0;
  };
  Counters counters() const;

 private:
  struct PipelineOutcome {
    InferencePacket packet;
    std::string alert_body;  // non-empty when an Alert route fired
  };

  PipelineOutcome run_pipeline(Deployment& d, const std::string& patient_id,
                               const std::optional<std::string>& order_id,
                               Timestamp inference_time);
  std::string render_alert(const Deployment& d, double score) const;

  emr::EmrClient& emr_;
  PacketStore& store_;
  const Clock& clock_;

  std::map<std::string, std::unique_ptr<Deployment>> deployments_;
  mutable std::shared_mutex deployments_mu_;
  std::atomic<std::uint64_t> packet_seq_{0};

  mutable std::mutex counters_mu_;
  Counters counters_;

  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  bool started_ = false;
};

}  // namespace clinloop::serve

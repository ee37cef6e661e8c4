#include "clinloop/serve/engine.hpp"

#include <algorithm>
#include <cstdio>

#include "httplib.h"

#include "clinloop/features/sources.hpp"
#include "clinloop/numfmt.hpp"

namespace clinloop::serve {

using nlohmann::json;

void TriggerConfig::validate() const {
  if (randomization_p < 0.0 || randomization_p > 1.0) {
    throw ValidationError("randomization_p must lie in [0,1]");
  }
  if (mode == Mode::Loud && routes.empty()) {
    throw ValidationError("loud deployments need at least one route");
  }
  if (const auto* timer = std::get_if<TimerTrigger>(&trigger)) {
    CronExpr::parse(timer->cron_expr);  // throws on bad syntax
    if (timer->unit_id.empty()) throw ValidationError("timer needs a unit_id");
  }
}

json TriggerConfig::to_json() const {
  json j;
  if (const auto* ev = std::get_if<EventTrigger>(&trigger)) {
    j["trigger"] = {{"type", "event"},
                    {"panel_code", emr::to_string(ev->panel_code)}};
  } else {
    const auto& timer = std::get<TimerTrigger>(trigger);
    j["trigger"] = {{"type", "timer"},
                    {"cron", timer.cron_expr},
                    {"unit_id", timer.unit_id}};
  }
  j["mode"] = mode == Mode::Silent ? "silent" : "loud";
  json routes_j = json::array();
  for (auto r : routes) routes_j.push_back(to_string(r));
  j["routes"] = routes_j;
  j["randomization_p"] = randomization_p;
  j["rng_seed"] = rng_seed;
  return j;
}

TriggerConfig TriggerConfig::from_json(const json& j) {
  TriggerConfig c;
  const auto& t = j.at("trigger");
  const std::string type = t.at("type").get<std::string>();
  if (type == "event") {
    c.trigger = EventTrigger{
        emr::panel_from_string(t.at("panel_code").get<std::string>())};
  } else if (type == "timer") {
    c.trigger = TimerTrigger{t.at("cron").get<std::string>(),
                             t.at("unit_id").get<std::string>()};
  } else {
    throw ValidationError("unknown trigger type '" + type + "'");
  }
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "silent") {
    c.mode = Mode::Silent;
  } else if (mode == "loud") {
    c.mode = Mode::Loud;
  } else {
    throw ValidationError("unknown mode '" + mode + "'");
  }
  for (const auto& r : j.at("routes")) {
    c.routes.push_back(route_from_string(r.get<std::string>()));
  }
  c.randomization_p = j.at("randomization_p").get<double>();
  c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  c.validate();
  return c;
}

double arm_draw_u(std::uint64_t seed, std::uint64_t draw_index) {
  return (mix64(mix64(seed) ^ mix64(draw_index + 0x9e3779b97f4a7c15ULL)) >> 11) *
         0x1.0p-53;
}

Arm assign_arm(std::uint64_t seed, std::uint64_t draw_index, double p) {
  return arm_draw_u(seed, draw_index) < p ? Arm::Suppress : Arm::Display;
}

ServeEngine::ServeEngine(emr::EmrClient& emr, PacketStore& store,
                         const Clock& clock)
    : emr_(emr), store_(store), clock_(clock),
      server_(std::make_unique<httplib::Server>()) {}

ServeEngine::~ServeEngine() { stop(); }

std::string ServeEngine::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

void ServeEngine::start(int port) {
  server_->Post(R"(/models/([^/]+)/infer)", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
    EventRequest er;
    try {
      const json body = json::parse(req.body);
      er.patient_id = body.at("patient_id").get<std::string>();
      er.order_id = body.at("order_id").get<std::string>();
      er.panel_code =
          emr::panel_from_string(body.at("panel_code").get<std::string>());
      er.order_time = parse_rfc3339(body.at("order_time").get<std::string>());
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    const Response r = handle_event(req.matches[1], er);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  });

  if (port == 0) {
    port_ = server_->bind_to_any_port("127.0.0.1");
  } else {
    server_->bind_to_port("127.0.0.1", port);
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  started_ = true;
}

void ServeEngine::stop() {
  if (server_ && server_->is_running()) server_->stop();
  if (thread_.joinable()) thread_.join();
  started_ = false;
}

Deployment& ServeEngine::register_deployment(model::ModelBundle bundle,
                                             TriggerConfig config) {
  config.validate();
  bundle.validate();

  std::unique_lock lock(deployments_mu_);
  if (deployments_.count(bundle.model_id) > 0) {
    throw ConflictError("model '" + bundle.model_id + "' already deployed");
  }

  auto d = std::make_unique<Deployment>();
  d->model_id = bundle.model_id;
  d->config = std::move(config);
  d->endpoint_path = "/models/" + bundle.model_id + "/infer";
  d->bundle = std::move(bundle);

  if (const auto* timer =
          std::get_if<TriggerConfig::TimerTrigger>(&d->config.trigger)) {
    d->schedule = CronExpr::parse(timer->cron_expr);
    d->next_fire = d->schedule->next_after(clock_.now());
  } else if (started_) {
    const auto& ev = std::get<TriggerConfig::EventTrigger>(d->config.trigger);
    // Fails closed: no subscription, no deployment.
    d->subscription_id =
        emr_.subscribe(ev.panel_code, base_url() + d->endpoint_path);
  }

  auto [it, ok] = deployments_.emplace(d->model_id, std::move(d));
  return *it->second;
}

void ServeEngine::pause(const std::string& model_id) {
  std::unique_lock lock(deployments_mu_);
  auto it = deployments_.find(model_id);
  if (it == deployments_.end()) {
    throw NotFoundError("model '" + model_id + "'");
  }
  it->second->status = Deployment::Status::Paused;
}

std::string ServeEngine::render_alert(const Deployment& d, double score) const {
  const bool above = score >= d.bundle.decision_threshold;
  std::string msg = d.bundle.component_code +
                    (above ? " predicted abnormal" : " predicted normal") +
                    " (score " + fmt_double(score) + ")";
  return "<alert><model_id>" + d.model_id + "</model_id><score>" +
         fmt_double(score) + "</score><threshold>" +
         fmt_double(d.bundle.decision_threshold) + "</threshold><message>" +
         msg + "</message></alert>";
}

ServeEngine::PipelineOutcome ServeEngine::run_pipeline(
    Deployment& d, const std::string& patient_id,
    const std::optional<std::string>& order_id, Timestamp inference_time) {
  features::PatientHistory history =
      features::fetch_history_transactional(emr_, patient_id, inference_time);
  features::VectorizeResult feat =
      features::featurize(history, d.bundle.vocabulary);
  const double score = d.bundle.predict(feat.vector);

  const std::uint64_t draw_index = d.arm_counter.fetch_add(1);
  const Arm arm =
      assign_arm(d.config.rng_seed, draw_index, d.config.randomization_p);

  PipelineOutcome out;
  InferencePacket& p = out.packet;
  p.packet_id = d.model_id + "-" + std::to_string(packet_seq_.fetch_add(1) + 1);
  p.model_id = d.model_id;
  p.patient_id = patient_id;
  p.order_id = order_id;
  p.inference_time = inference_time;
  p.features = std::move(feat.vector);
  p.score = score;
  p.arm = arm;
  p.arm_draw_index = draw_index;
  p.oov_count = feat.oov_count;

  if (d.config.mode == TriggerConfig::Mode::Loud && arm == Arm::Display) {
    for (RouteKind route : d.config.routes) {
      if (route == RouteKind::Alert) {
        out.alert_body = render_alert(d, score);
        p.routed.push_back({route, true});
        continue;
      }
      json payload = {{"model_id", d.model_id},
                      {"patient_id", patient_id},
                      {"packet_id", p.packet_id},
                      {"score", score}};
      if (route == RouteKind::Flowsheet) {
        payload["time"] = format_rfc3339(inference_time);
      }
      if (route == RouteKind::Inbasket) {
        payload["message"] = d.bundle.component_code + " score " +
                             fmt_double(score) + " for " + patient_id;
      }
      emr::WritebackTarget target = emr::WritebackTarget::ScoreColumn;
      if (route == RouteKind::Flowsheet) target = emr::WritebackTarget::Flowsheet;
      if (route == RouteKind::Inbasket) target = emr::WritebackTarget::Inbasket;
      bool ok = true;
      try {
        emr_.writeback(target, payload);
      } catch (const std::exception&) {
        ok = false;  // remaining routes still run
      }
      p.routed.push_back({route, ok});
    }
  }

  store_.append_packet(p);
  {
    std::lock_guard lk(counters_mu_);
    ++counters_.packets_appended;
  }
  return out;
}

ServeEngine::Response ServeEngine::handle_event(const std::string& model_id,
                                                const EventRequest& req) {
  {
    std::lock_guard lk(counters_mu_);
    ++counters_.callbacks_received;
  }

  std::shared_lock lock(deployments_mu_);
  auto it = deployments_.find(model_id);
  if (it == deployments_.end()) {
    return {404, "application/json",
            json{{"error", "unknown model '" + model_id + "'"}}.dump()};
  }
  Deployment& d = *it->second;
  if (d.status != Deployment::Status::Active) {
    return {409, "application/json", json{{"error", "deployment paused"}}.dump()};
  }
  const auto* ev = std::get_if<TriggerConfig::EventTrigger>(&d.config.trigger);
  if (ev == nullptr || ev->panel_code != req.panel_code) {
    return {400, "application/json",
            json{{"error", "panel does not match deployment trigger"}}.dump()};
  }

  try {
    PipelineOutcome out =
        run_pipeline(d, req.patient_id, req.order_id, req.order_time);
    if (!out.alert_body.empty()) {
      return {200, "application/xml", out.alert_body};
    }
    json ack = {{"packet_id", out.packet.packet_id},
                {"arm", to_string(out.packet.arm)}};
    if (d.config.mode == TriggerConfig::Mode::Loud) {
      ack["score"] = out.packet.score;
    }
    return {200, "application/json", ack.dump()};
  } catch (const VocabularyMismatchError& e) {
    std::lock_guard lk(counters_mu_);
    ++counters_.vocab_errors;
    std::fprintf(stderr, "[serve] vocabulary mismatch: %s\n", e.what());
    return {500, "application/json", json{{"error", e.what()}}.dump()};
  } catch (const std::exception& e) {
    // Fail closed: no packet, no fabricated score.
    std::lock_guard lk(counters_mu_);
    ++counters_.fetch_errors;
    return {503, "application/json", json{{"error", e.what()}}.dump()};
  }
}

std::vector<std::string> ServeEngine::run_timer_tick(const std::string& model_id,
                                                     Timestamp now) {
  std::shared_lock lock(deployments_mu_);
  auto it = deployments_.find(model_id);
  if (it == deployments_.end()) {
    throw NotFoundError("model '" + model_id + "'");
  }
  Deployment& d = *it->second;
  if (d.status != Deployment::Status::Active || !d.schedule ||
      !d.schedule->matches(now)) {
    return {};
  }

  const auto& timer = std::get<TriggerConfig::TimerTrigger>(d.config.trigger);
  std::vector<std::string> roster;
  try {
    roster = emr_.unit_roster(timer.unit_id);
  } catch (const std::exception&) {
    std::lock_guard lk(counters_mu_);
    ++counters_.tick_skips;
    return {};
  }

  std::vector<std::string> packet_ids;
  for (const auto& pid : roster) {
    {
      std::lock_guard lk(counters_mu_);
      ++counters_.roster_hits;
    }
    try {
      PipelineOutcome out = run_pipeline(d, pid, std::nullopt, now);
      packet_ids.push_back(out.packet.packet_id);
    } catch (const std::exception&) {
      std::lock_guard lk(counters_mu_);
      ++counters_.patient_errors;
    }
  }
  return packet_ids;
}

void ServeEngine::advance_to(Timestamp now) {
  while (true) {
    std::string due_model;
    Timestamp due_time = 0;
    {
      std::shared_lock lock(deployments_mu_);
      for (const auto& [id, d] : deployments_) {
        if (!d->schedule || d->status != Deployment::Status::Active) continue;
        if (d->next_fire <= now &&
            (due_model.empty() || d->next_fire < due_time)) {
          due_model = id;
          due_time = d->next_fire;
        }
      }
    }
    if (due_model.empty()) return;
    run_timer_tick(due_model, due_time);
    {
      std::unique_lock lock(deployments_mu_);
      auto& d = *deployments_.at(due_model);
      d.next_fire = d.schedule->next_after(due_time);
    }
  }
}

ServeEngine::Counters ServeEngine::counters() const {
  std::lock_guard lk(counters_mu_);
  return counters_;
}

}  // namespace clinloop::serve

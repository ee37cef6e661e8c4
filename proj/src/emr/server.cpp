#include "clinloop/emr/server.hpp"

#include "httplib.h"
#include "json.hpp"

#include "clinloop/emr/client.hpp"
#include "clinloop/numfmt.hpp"

namespace clinloop::emr {

using nlohmann::json;

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& msg) {
  reply_json(res, status, json{{"error", msg}});
}

json code_at_array(const std::vector<CodeAt>& v) {
  json arr = json::array();
  for (const auto& c : v) {
    arr.push_back({{"code", c.code},
                   {"effective_time", format_rfc3339(c.effective_time)}});
  }
  return arr;
}

json obs_json(const LabObservation& o) {
  return {{"order_id", o.order_id},
          {"component", o.component_code},
          {"value", o.value},
          {"abnormal", o.abnormal},
          {"effective_time", format_rfc3339(o.effective_time)}};
}

}  // namespace

EmrHttpServer::EmrHttpServer(World& world, const Clock& clock)
    : world_(world), clock_(clock), server_(std::make_unique<httplib::Server>()) {}

EmrHttpServer::~EmrHttpServer() { stop(); }

std::string EmrHttpServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

void EmrHttpServer::route() {
  auto& s = *server_;

  s.Get(R"(/Patient/([^/]+))", [this](const httplib::Request& req,
                                      httplib::Response& res) {
    const auto p = world_.patient(req.matches[1]);
    if (!p) return reply_error(res, 404, "unknown patient");
    reply_json(res, 200,
               json{{"patient_id", p->patient_id},
                    {"birth_date", format_date(p->birth_date)},
                    {"sex", to_string(p->sex)},
                    {"race", to_string(p->race)},
                    {"unit_id", p->unit_id}});
  });

  s.Get("/Condition", [this](const httplib::Request& req,
                             httplib::Response& res) {
    if (!req.has_param("patient")) return reply_error(res, 400, "missing patient");
    try {
      auto v = world_.conditions(req.get_param_value("patient"), clock_.now());
      reply_json(res, 200, json{{"conditions", code_at_array(v)}});
    } catch (const NotFoundError& e) {
      reply_error(res, 404, e.what());
    }
  });

  s.Get("/MedicationRequest", [this](const httplib::Request& req,
                                     httplib::Response& res) {
    if (!req.has_param("patient")) return reply_error(res, 400, "missing patient");
    Timestamp since = std::numeric_limits<Timestamp>::min();
    try {
      if (req.has_param("since")) since = parse_rfc3339(req.get_param_value("since"));
    } catch (const ValidationError& e) {
      return reply_error(res, 400, e.what());
    }
    try {
      auto v = world_.medications(req.get_param_value("patient"), since,
                                  clock_.now());
      reply_json(res, 200, json{{"medications", code_at_array(v)}});
    } catch (const NotFoundError& e) {
      reply_error(res, 404, e.what());
    }
  });

  s.Get("/Observation", [this](const httplib::Request& req,
                               httplib::Response& res) {
    if (req.has_param("order")) {
      if (!req.has_param("component"))
        return reply_error(res, 400, "missing component");
      auto o = world_.observation_for_order(req.get_param_value("order"),
                                            req.get_param_value("component"),
                                            clock_.now());
      json arr = json::array();
      if (o) arr.push_back(obs_json(*o));
      return reply_json(res, 200, json{{"observations", arr}});
    }
    if (!req.has_param("patient")) return reply_error(res, 400, "missing patient");
    Timestamp since = std::numeric_limits<Timestamp>::min();
    try {
      if (req.has_param("since")) since = parse_rfc3339(req.get_param_value("since"));
    } catch (const ValidationError& e) {
      return reply_error(res, 400, e.what());
    }
    try {
      auto v = world_.observations(req.get_param_value("patient"), since,
                                   clock_.now());
      json arr = json::array();
      for (const auto& o : v) arr.push_back(obs_json(o));
      reply_json(res, 200, json{{"observations", arr}});
    } catch (const NotFoundError& e) {
      reply_error(res, 404, e.what());
    }
  });

  s.Get(R"(/Unit/([^/]+)/patients)", [this](const httplib::Request& req,
                                            httplib::Response& res) {
    try {
      auto v = world_.unit_roster(req.matches[1]);
      reply_json(res, 200, json{{"unit_id", std::string(req.matches[1])},
                                {"patient_ids", v}});
    } catch (const NotFoundError& e) {
      reply_error(res, 404, e.what());
    }
  });

  s.Post("/Subscription", [this](const httplib::Request& req,
                                 httplib::Response& res) {
    try {
      const json body = json::parse(req.body);
      const int id = world_.add_subscription(
          panel_from_string(body.at("panel_code").get<std::string>()),
          body.at("callback_url").get<std::string>());
      reply_json(res, 200, json{{"subscription_id", id}});
    } catch (const std::exception& e) {
      reply_error(res, 400, e.what());
    }
  });

  s.Post(R"(/writeback/([^/]+))", [this](const httplib::Request& req,
                                         httplib::Response& res) {
    const std::string target = req.matches[1];
    WritebackTarget t;
    if (target == "score") {
      t = WritebackTarget::ScoreColumn;
    } else if (target == "flowsheet") {
      t = WritebackTarget::Flowsheet;
    } else if (target == "inbasket") {
      t = WritebackTarget::Inbasket;
    } else {
      return reply_error(res, 400, "unknown writeback target '" + target + "'");
    }
    try {
      world_.apply_writeback(t, json::parse(req.body), clock_.now());
      reply_json(res, 200, json{{"ok", true},
                                {"received_at", format_rfc3339(clock_.now())}});
    } catch (const NotFoundError& e) {
      reply_error(res, 404, e.what());
    } catch (const std::exception& e) {
      reply_error(res, 400, e.what());
    }
  });

  s.Get(R"(/writeback/([^/]+))", [this](const httplib::Request& req,
                                        httplib::Response& res) {
    const std::string target = req.matches[1];
    WritebackTarget t;
    if (target == "score") {
      t = WritebackTarget::ScoreColumn;
    } else if (target == "flowsheet") {
      t = WritebackTarget::Flowsheet;
    } else if (target == "inbasket") {
      t = WritebackTarget::Inbasket;
    } else {
      return reply_error(res, 400, "unknown writeback target '" + target + "'");
    }
    json arr = json::array();
    for (const auto& e : world_.writeback_log(t)) {
      arr.push_back({{"payload", e.payload},
                     {"received_at", format_rfc3339(e.received_at)}});
    }
    reply_json(res, 200, json{{"entries", arr}});
  });
}

void EmrHttpServer::start(int port) {
  route();
  if (port == 0) {
    port_ = server_->bind_to_any_port("127.0.0.1");
  } else {
    server_->bind_to_port("127.0.0.1", port);
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void EmrHttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace clinloop::emr

#include "clinloop/emr/client.hpp"

#include "httplib.h"

#include "clinloop/numfmt.hpp"

namespace clinloop::emr {

using nlohmann::json;

// ---- InProcessEmrClient ----

PatientRecord InProcessEmrClient::patient(const std::string& patient_id) {
  const auto p = world_.patient(patient_id);
  if (!p) throw NotFoundError("patient '" + patient_id + "'");
  return *p;
}

std::vector<CodeAt> InProcessEmrClient::conditions(const std::string& patient_id) {
  return world_.conditions(patient_id, clock_.now());
}

std::vector<CodeAt> InProcessEmrClient::medications(const std::string& patient_id,
                                                    Timestamp since) {
  return world_.medications(patient_id, since, clock_.now());
}

std::vector<LabObservation> InProcessEmrClient::observations(
    const std::string& patient_id, Timestamp since) {
  return world_.observations(patient_id, since, clock_.now());
}

std::optional<LabObservation> InProcessEmrClient::observation_for_order(
    const std::string& order_id, const std::string& component) {
  return world_.observation_for_order(order_id, component, clock_.now());
}

std::vector<std::string> InProcessEmrClient::unit_roster(
    const std::string& unit_id) {
  return world_.unit_roster(unit_id);
}

int InProcessEmrClient::subscribe(PanelCode panel,
                                  const std::string& callback_url) {
  return world_.add_subscription(panel, callback_url);
}

void InProcessEmrClient::writeback(WritebackTarget target,
                                   const nlohmann::json& payload) {
  world_.apply_writeback(target, payload, clock_.now());
}

// ---- HttpEmrClient ----

namespace {

CodeAt parse_code_at(const json& j) {
  return {j.at("code").get<std::string>(),
          parse_rfc3339(j.at("effective_time").get<std::string>())};
}

LabObservation parse_obs(const json& j) {
  return {j.at("order_id").get<std::string>(),
          j.at("component").get<std::string>(), j.at("value").get<double>(),
          j.at("abnormal").get<bool>(),
          parse_rfc3339(j.at("effective_time").get<std::string>())};
}

std::string url_encode_param(const std::string& v) {
  std::string out;
  for (char c : v) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ||
        c == '.' || c == '~') {
      out.push_back(c);
    } else {
      char buf[4];
      std::snprintf(buf, sizeof(buf), "%%%02X", static_cast<unsigned char>(c));
      out += buf;
    }
  }
  return out;
}

}  // namespace

json HttpEmrClient::get_json(const std::string& path) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5, 0);
  cli.set_read_timeout(30, 0);
  auto res = cli.Get(path);
  if (!res) {
    throw SourceUnavailableError("EMR unreachable: " + path + " (" +
                                 httplib::to_string(res.error()) + ")");
  }
  if (res->status == 404) throw NotFoundError("EMR 404: " + path);
  if (res->status != 200) {
    throw SourceUnavailableError("EMR status " + std::to_string(res->status) +
                                 ": " + path);
  }
  return json::parse(res->body);
}

PatientRecord HttpEmrClient::patient(const std::string& patient_id) {
  const json j = get_json("/Patient/" + url_encode_param(patient_id));
  PatientRecord r;
  r.patient_id = j.at("patient_id").get<std::string>();
  r.birth_date = parse_date(j.at("birth_date").get<std::string>());
  r.sex = sex_from_string(j.at("sex").get<std::string>());
  r.race = race_from_string(j.at("race").get<std::string>());
  r.unit_id = j.at("unit_id").get<std::string>();
  return r;
}

std::vector<CodeAt> HttpEmrClient::conditions(const std::string& patient_id) {
  const json j = get_json("/Condition?patient=" + url_encode_param(patient_id));
  std::vector<CodeAt> out;
  for (const auto& e : j.at("conditions")) out.push_back(parse_code_at(e));
  return out;
}

std::vector<CodeAt> HttpEmrClient::medications(const std::string& patient_id,
                                               Timestamp since) {
  const json j = get_json("/MedicationRequest?patient=" +
                          url_encode_param(patient_id) +
                          "&since=" + url_encode_param(format_rfc3339(since)));
  std::vector<CodeAt> out;
  for (const auto& e : j.at("medications")) out.push_back(parse_code_at(e));
  return out;
}

std::vector<LabObservation> HttpEmrClient::observations(
    const std::string& patient_id, Timestamp since) {
  const json j = get_json("/Observation?patient=" + url_encode_param(patient_id) +
                          "&since=" + url_encode_param(format_rfc3339(since)));
  std::vector<LabObservation> out;
  for (const auto& e : j.at("observations")) out.push_back(parse_obs(e));
  return out;
}

std::optional<LabObservation> HttpEmrClient::observation_for_order(
    const std::string& order_id, const std::string& component) {
  const json j = get_json("/Observation?order=" + url_encode_param(order_id) +
                          "&component=" + url_encode_param(component));
  const auto& arr = j.at("observations");
  if (arr.empty()) return std::nullopt;
  return parse_obs(arr.at(0));
}

std::vector<std::string> HttpEmrClient::unit_roster(const std::string& unit_id) {
  const json j = get_json("/Unit/" + url_encode_param(unit_id) + "/patients");
  return j.at("patient_ids").get<std::vector<std::string>>();
}

int HttpEmrClient::subscribe(PanelCode panel, const std::string& callback_url) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5, 0);
  const json body = {{"panel_code", to_string(panel)},
                     {"callback_url", callback_url}};
  auto res = cli.Post("/Subscription", body.dump(), "application/json");
  if (!res || res->status != 200) {
    throw SourceUnavailableError("subscription failed");
  }
  return json::parse(res->body).at("subscription_id").get<int>();
}

void HttpEmrClient::writeback(WritebackTarget target,
                              const nlohmann::json& payload) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5, 0);
  auto res = cli.Post("/writeback/" + to_string(target), payload.dump(),
                      "application/json");
  if (!res) throw SourceUnavailableError("writeback transport failure");
  if (res->status == 404) throw NotFoundError("writeback 404");
  if (res->status != 200) {
    throw SourceUnavailableError("writeback status " +
                                 std::to_string(res->status));
  }
}

// ---- HttpWebhookPoster ----

WebhookPoster::Result HttpWebhookPoster::post(const std::string& url,
                                              const nlohmann::json& payload) {
  // url is "http://host:port/path".
  Result out;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    out.error = "bad url '" + url + "'";
    return out;
  }
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string host_port =
      url.substr(scheme_end + 3,
                 (path_start == std::string::npos ? url.size() : path_start) -
                     scheme_end - 3);
  const std::string path =
      path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client cli(("http://" + host_port).c_str());
  cli.set_connection_timeout(5, 0);
  cli.set_read_timeout(60, 0);
  auto res = cli.Post(path, payload.dump(), "application/json");
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  if (res->status != 200) {
    out.error = "status " + std::to_string(res->status);
    return out;
  }
  out.ok = true;
  out.body = res->body;
  return out;
}

}  // namespace clinloop::emr

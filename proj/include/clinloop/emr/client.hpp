#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "clinloop/clock.hpp"
#include "clinloop/emr/types.hpp"
#include "clinloop/emr/world.hpp"

#include "json.hpp"

namespace clinloop::emr {

// Read/write access to the transactional EMR as the deployment side sees it.
// Reads throw NotFoundError for unknown entities and SourceUnavailableError
// for transport failures; callers on the inference path fail closed on both.
class EmrClient {
 public:
  virtual ~EmrClient() = default;

  virtual PatientRecord patient(const std::string& patient_id) = 0;
  virtual std::vector<CodeAt> conditions(const std::string& patient_id) = 0;
  virtual std::vector<CodeAt> medications(const std::string& patient_id,
                                          Timestamp since) = 0;
  virtual std::vector<LabObservation> observations(
      const std::string& patient_id, Timestamp since) = 0;
  virtual std::optional<LabObservation> observation_for_order(
      const std::string& order_id, const std::string& component) = 0;
  virtual std::vector<std::string> unit_roster(const std::string& unit_id) = 0;

  virtual int subscribe(PanelCode panel, const std::string& callback_url) = 0;
  virtual void writeback(WritebackTarget target,
                         const nlohmann::json& payload) = 0;
};

// Direct-call client over an in-process World; used by the simulator's own
// HTTP handlers and by tests that do not exercise the wire.
class InProcessEmrClient : public EmrClient {
 public:
  InProcessEmrClient(World& world, const Clock& clock)
      : world_(world), clock_(clock) {}

  PatientRecord patient(const std::string& patient_id) override;
  std::vector<CodeAt> conditions(const std::string& patient_id) override;
  std::vector<CodeAt> medications(const std::string& patient_id,
                                  Timestamp since) override;
  std::vector<LabObservation> observations(const std::string& patient_id,
                                           Timestamp since) override;
  std::optional<LabObservation> observation_for_order(
      const std::string& order_id, const std::string& component) override;
  std::vector<std::string> unit_roster(const std::string& unit_id) override;
  int subscribe(PanelCode panel, const std::string& callback_url) override;
  void writeback(WritebackTarget target, const nlohmann::json& payload) override;

 private:
  World& world_;
  const Clock& clock_;
};

// HTTP client speaking the simulator's wire protocol.
class HttpEmrClient : public EmrClient {
 public:
  HttpEmrClient(std::string host, int port)
      : host_(std::move(host)), port_(port) {}

  PatientRecord patient(const std::string& patient_id) override;
  std::vector<CodeAt> conditions(const std::string& patient_id) override;
  std::vector<CodeAt> medications(const std::string& patient_id,
                                  Timestamp since) override;
  std::vector<LabObservation> observations(const std::string& patient_id,
                                           Timestamp since) override;
  std::optional<LabObservation> observation_for_order(
      const std::string& order_id, const std::string& component) override;
  std::vector<std::string> unit_roster(const std::string& unit_id) override;
  int subscribe(PanelCode panel, const std::string& callback_url) override;
  void writeback(WritebackTarget target, const nlohmann::json& payload) override;

 private:
  nlohmann::json get_json(const std::string& path);

  std::string host_;
  int port_;
};

// Outbound webhook transport used by World::sign_order for subscriptions.
class HttpWebhookPoster : public WebhookPoster {
 public:
  Result post(const std::string& url, const nlohmann::json& payload) override;
};

}  // namespace clinloop::emr

#pragma once

#include <memory>
#include <string>
#include <thread>

#include "clinloop/clock.hpp"
#include "clinloop/emr/world.hpp"

namespace httplib {
class Server;
}

namespace clinloop::emr {

// HTTP facade over a World. Endpoints (JSON unless noted):
//   GET  /Patient/{id}
//   GET  /Condition?patient={id}
//   GET  /MedicationRequest?patient={id}&since={rfc3339}
//   GET  /Observation?patient={id}&since={rfc3339}
//   GET  /Observation?order={order_id}&component={code}
//   GET  /Unit/{unit_id}/patients
//   POST /Subscription            {panel_code, callback_url}
//   POST /writeback/score | /writeback/flowsheet | /writeback/inbasket
//   GET  /writeback/{target}      (log inspection)
// Reads reflect only facts visible at the injected clock's now.
class EmrHttpServer {
 public:
  EmrHttpServer(World& world, const Clock& clock);
  ~EmrHttpServer();

  // Binds 127.0.0.1 on `port` (0 picks a free port) and serves on a
  // background thread until destruction.
  void start(int port = 0);
  void stop();

  int port() const { return port_; }
  std::string base_url() const;

 private:
  void route();

  World& world_;
  const Clock& clock_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace clinloop::emr

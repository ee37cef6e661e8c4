#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "httplib.h"

#include "clinloop/emr/client.hpp"
#include "clinloop/emr/server.hpp"
#include "clinloop/emr/warehouse.hpp"
#include "clinloop/features/sources.hpp"
#include "helpers.hpp"

using namespace clinloop;
using namespace clinloop::emr;
using testutil::ts;

namespace {

struct Fixture {
  std::unique_ptr<World> world;
  VirtualClock clock{testutil::ts("2022-06-01T00:00:00Z")};
  std::unique_ptr<EmrHttpServer> server;

  explicit Fixture(std::uint64_t seed = 301, int patients = 15) {
    world = generate_world(testutil::small_world_config(seed, patients));
    server = std::make_unique<EmrHttpServer>(*world, clock);
    server->start();
  }

  httplib::Client raw() const {
    httplib::Client cli("127.0.0.1", server->port());
    cli.set_connection_timeout(5, 0);
    return cli;
  }
};

}  // namespace

TEST_CASE("GET /Patient matches the warehouse row exactly") {
  Fixture fx;
  const auto dir = testutil::scratch_dir("http_pat");
  export_warehouse(*fx.world, fx.world->config().sim_horizon, dir);
  const auto wh = WarehouseData::load(dir);

  HttpEmrClient client("127.0.0.1", fx.server->port());
  for (const auto& pid : fx.world->patient_ids()) {
    const PatientRecord via_api = client.patient(pid);
    const PatientRecord* via_wh = wh.find_patient(pid);
    REQUIRE(via_wh != nullptr);
    CHECK(via_api.patient_id == via_wh->patient_id);
    CHECK(via_api.birth_date == via_wh->birth_date);
    CHECK(via_api.sex == via_wh->sex);
    CHECK(via_api.race == via_wh->race);
    CHECK(via_api.unit_id == via_wh->unit_id);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("unknown patient is 404; malformed queries are 400") {
  Fixture fx;
  auto cli = fx.raw();
  CHECK(cli.Get("/Patient/NOPE")->status == 404);
  CHECK(cli.Get("/Condition")->status == 400);
  CHECK(cli.Get("/Condition?patient=NOPE")->status == 404);
  CHECK(cli.Get("/Observation?patient=P000001&since=junk")->status == 400);
  CHECK(cli.Get("/Observation?order=O1")->status == 400);

  HttpEmrClient client("127.0.0.1", fx.server->port());
  CHECK_THROWS_AS(client.patient("NOPE"), NotFoundError);
}

TEST_CASE("Observation since filter hides everything before it") {
  Fixture fx;
  HttpEmrClient client("127.0.0.1", fx.server->port());
  const Timestamp since = ts("2019-01-01T00:00:00Z");
  for (const auto& pid : fx.world->patient_ids()) {
    for (const auto& obs : client.observations(pid, since)) {
      CHECK(obs.effective_time >= since);
    }
  }
}

TEST_CASE("reads honor the clock: results appear only after maturation") {
  Fixture fx;
  const std::string pid = fx.world->patient_ids()[0];
  const Timestamp t = fx.clock.now();
  const auto order = fx.world->sign_order(pid, PanelCode::CBC, t, nullptr);

  HttpEmrClient client("127.0.0.1", fx.server->port());
  fx.clock.set(t + hours(1));
  CHECK(!client.observation_for_order(order.order_id, "HCT").has_value());
  fx.clock.set(t + hours(3));
  const auto obs = client.observation_for_order(order.order_id, "HCT");
  REQUIRE(obs.has_value());
  CHECK(obs->order_id == order.order_id);
}

TEST_CASE("unit roster endpoint returns exactly the unit's patients") {
  Fixture fx;
  HttpEmrClient client("127.0.0.1", fx.server->port());
  for (const auto& unit : fx.world->unit_ids()) {
    CHECK(client.unit_roster(unit) == fx.world->unit_roster(unit));
  }
  CHECK_THROWS_AS(client.unit_roster("U999"), NotFoundError);
}

TEST_CASE("subscription + order signature delivers a webhook over HTTP") {
  Fixture fx;

  // A tiny receiver standing in for the serving engine.
  httplib::Server receiver;
  std::vector<nlohmann::json> received;
  std::mutex mu;
  receiver.Post("/hook", [&](const httplib::Request& req,
                             httplib::Response& res) {
    std::lock_guard lock(mu);
    received.push_back(nlohmann::json::parse(req.body));
    res.set_content("{\"ok\":true}", "application/json");
  });
  const int rport = receiver.bind_to_any_port("127.0.0.1");
  std::thread rthread([&] { receiver.listen_after_bind(); });
  receiver.wait_until_ready();

  HttpEmrClient client("127.0.0.1", fx.server->port());
  client.subscribe(PanelCode::CBC,
                   "http://127.0.0.1:" + std::to_string(rport) + "/hook");

  HttpWebhookPoster poster;
  const std::string pid = fx.world->patient_ids()[0];
  const auto order =
      fx.world->sign_order(pid, PanelCode::CBC, fx.clock.now(), &poster);
  fx.world->sign_order(pid, PanelCode::MAGNESIUM, fx.clock.now(), &poster);

  {
    std::lock_guard lock(mu);
    REQUIRE(received.size() == 1);  // only the matching panel fired
    CHECK(received[0].at("order_id") == order.order_id);
    CHECK(received[0].at("patient_id") == pid);
    CHECK(received[0].at("panel_code") == "CBC");
  }
  CHECK(fx.world->callbacks_dispatched() == 1);
  receiver.stop();
  rthread.join();
}

TEST_CASE("writeback endpoints: round trip, ordering, 404 and 400") {
  Fixture fx;
  HttpEmrClient client("127.0.0.1", fx.server->port());
  const std::string pid = fx.world->patient_ids()[0];

  client.writeback(WritebackTarget::ScoreColumn,
                   {{"patient_id", pid}, {"packet_id", "pk9"}, {"score", 0.73}});
  const auto log = fx.world->writeback_log(WritebackTarget::ScoreColumn);
  REQUIRE(log.size() == 1);
  CHECK(log[0].payload.at("score") == 0.73);
  CHECK(log[0].payload.at("packet_id") == "pk9");

  // Read back over the wire too.
  auto cli = fx.raw();
  const auto res = cli.Get("/writeback/score");
  REQUIRE(res->status == 200);
  const auto entries = nlohmann::json::parse(res->body).at("entries");
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].at("payload").at("packet_id") == "pk9");

  CHECK_THROWS_AS(client.writeback(WritebackTarget::Inbasket,
                                   {{"patient_id", "ghost"}, {"message", "x"}}),
                  NotFoundError);
  CHECK(fx.world->writeback_log(WritebackTarget::Inbasket).empty());

  CHECK(cli.Post("/writeback/nonsense", "{}", "application/json")->status ==
        400);
  CHECK(cli.Post("/writeback/score", "not json", "application/json")->status ==
        400);
}

TEST_CASE("fetch_history_transactional maps API fields like the warehouse") {
  Fixture fx(307, 25);
  const auto dir = testutil::scratch_dir("http_parity");
  export_warehouse(*fx.world, fx.world->config().sim_horizon, dir);
  const auto wh = WarehouseData::load(dir);
  fx.clock.set(fx.world->config().sim_horizon);

  HttpEmrClient client("127.0.0.1", fx.server->port());
  Rng rng(5);
  const auto ids = fx.world->patient_ids();
  for (int i = 0; i < 40; ++i) {
    const std::string pid = ids[rng.index(ids.size())];
    const Timestamp t =
        ts("2016-01-01T00:00:00Z") +
        static_cast<Timestamp>(rng.u01() * 6.0 * 365.0 * kDay);
    const auto via_api = features::fetch_history_transactional(client, pid, t);
    const auto via_wh = features::load_history_warehouse(wh, pid, t);
    CHECK(via_api == via_wh);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("transactional fetch aborts on unknown patients and dead sources") {
  Fixture fx;
  HttpEmrClient client("127.0.0.1", fx.server->port());
  CHECK_THROWS_AS(
      features::fetch_history_transactional(client, "ghost", fx.clock.now()),
      NotFoundError);

  HttpEmrClient dead("127.0.0.1", 1);
  CHECK_THROWS_AS(
      features::fetch_history_transactional(dead, "P000001", fx.clock.now()),
      SourceUnavailableError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "clinloop/emr/server.hpp"
#include "clinloop/features/sources.hpp"
#include "clinloop/serve/engine.hpp"
#include "helpers.hpp"

using namespace clinloop;
using namespace clinloop::serve;
using testutil::ts;

namespace {

// EmrClient wrapper that can fail selected write-back targets.
class FaultyEmr : public emr::EmrClient {
 public:
  explicit FaultyEmr(emr::EmrClient& inner) : inner_(inner) {}
  std::set<emr::WritebackTarget> broken;

  emr::PatientRecord patient(const std::string& id) override {
    return inner_.patient(id);
  }
  std::vector<emr::CodeAt> conditions(const std::string& id) override {
    return inner_.conditions(id);
  }
  std::vector<emr::CodeAt> medications(const std::string& id,
                                       Timestamp since) override {
    return inner_.medications(id, since);
  }
  std::vector<emr::LabObservation> observations(const std::string& id,
                                                Timestamp since) override {
    return inner_.observations(id, since);
  }
  std::optional<emr::LabObservation> observation_for_order(
      const std::string& order_id, const std::string& component) override {
    return inner_.observation_for_order(order_id, component);
  }
  std::vector<std::string> unit_roster(const std::string& unit_id) override {
    return inner_.unit_roster(unit_id);
  }
  int subscribe(emr::PanelCode panel, const std::string& url) override {
    return inner_.subscribe(panel, url);
  }
  void writeback(emr::WritebackTarget target,
                 const nlohmann::json& payload) override {
    if (broken.count(target) > 0) {
      throw SourceUnavailableError("injected write-back failure");
    }
    inner_.writeback(target, payload);
  }

 private:
  emr::EmrClient& inner_;
};

struct Fixture {
  std::unique_ptr<emr::World> world;
  VirtualClock clock{testutil::ts("2022-03-01T00:00:00Z")};
  std::unique_ptr<emr::InProcessEmrClient> emr_client;
  std::unique_ptr<FaultyEmr> faulty;
  std::filesystem::path dir;
  std::unique_ptr<PacketStore> store;
  std::unique_ptr<ServeEngine> engine;

  explicit Fixture(std::uint64_t seed = 501, int patients = 12) {
    world = emr::generate_world(testutil::small_world_config(seed, patients));
    emr_client = std::make_unique<emr::InProcessEmrClient>(*world, clock);
    faulty = std::make_unique<FaultyEmr>(*emr_client);
    dir = testutil::scratch_dir("engine");
    store = std::make_unique<PacketStore>(dir / "store.jsonl");
    engine = std::make_unique<ServeEngine>(*faulty, *store, clock);
  }

  ~Fixture() {
    engine.reset();
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
  }

  model::ModelBundle tiny_bundle(const std::string& id = "m1") {
    // A deliberately trivial model: one token, one stump.
    features::Vocabulary vocab(
        {{"age#0", 0}, {"age#1", 1}, {"age#2", 2}, {"age#3", 3}, {"age#4", 4}},
        {{"age", {30.0, 45.0, 60.0, 75.0}}});
    model::Tree t;
    t.nodes.push_back({0, 0, 1, 2, 0.0});
    t.nodes.push_back({-1, 0, -1, -1, 0.25});
    t.nodes.push_back({-1, 0, -1, -1, 0.75});
    model::ModelBundle b;
    b.model_id = id;
    b.panel_code = emr::PanelCode::CBC;
    b.component_code = "HCT";
    b.vocabulary = vocab;
    b.forest = model::Forest({t}, 5, 0);
    b.decision_threshold = 0.5;
    b.created_at = testutil::ts("2021-12-31T00:00:00Z");
    return b;
  }

  ServeEngine::EventRequest order_event(int i = 0) {
    const std::string pid = world->patient_ids()[i];
    const auto order =
        world->sign_order(pid, emr::PanelCode::CBC, clock.now(), nullptr);
    return {pid, order.order_id, emr::PanelCode::CBC, order.order_time};
  }
};

TriggerConfig silent_event() {
  TriggerConfig c;
  c.trigger = TriggerConfig::EventTrigger{emr::PanelCode::CBC};
  c.mode = TriggerConfig::Mode::Silent;
  return c;
}

}  // namespace

TEST_CASE("assign_arm: boundaries, rate, and exact replay") {
  CHECK(assign_arm(9, 0, 0.0) == Arm::Display);
  CHECK(assign_arm(9, 1, 1.0) == Arm::Suppress);

  std::size_t suppress = 0;
  std::vector<Arm> first;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const Arm a = assign_arm(1234, i, 0.5);
    first.push_back(a);
    suppress += a == Arm::Suppress ? 1 : 0;
  }
  const double rate = suppress / 10000.0;
  CHECK(rate > 0.485);
  CHECK(rate < 0.515);
  // Pure function of (seed, index): replay is exact.
  for (std::uint64_t i = 0; i < 10000; ++i) {
    CHECK(assign_arm(1234, i, 0.5) == first[i]);
  }
}

TEST_CASE("trigger config validation") {
  TriggerConfig c = silent_event();
  CHECK_NOTHROW(c.validate());
  c.mode = TriggerConfig::Mode::Loud;
  CHECK_THROWS_AS(c.validate(), ValidationError);  // loud needs routes
  c.routes = {RouteKind::ScoreColumn};
  CHECK_NOTHROW(c.validate());
  c.randomization_p = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.randomization_p = 0.2;
  c.trigger = TriggerConfig::TimerTrigger{"61 * * * *", "U001"};
  CHECK_THROWS_AS(c.validate(), ValidationError);  // cron syntax at registration
  c.trigger = TriggerConfig::TimerTrigger{"*/10 * * * *", "U001"};
  CHECK_NOTHROW(c.validate());
  // Round trip through JSON.
  const auto j = c.to_json();
  const auto back = TriggerConfig::from_json(j);
  CHECK(back.to_json() == j);
}

TEST_CASE("silent event flow: ack without score, packet stored, EMR untouched") {
  Fixture fx;
  fx.engine->register_deployment(fx.tiny_bundle(), silent_event());
  const auto req = fx.order_event();
  const auto res = fx.engine->handle_event("m1", req);
  CHECK(res.status == 200);
  const auto ack = nlohmann::json::parse(res.body);
  CHECK(ack.contains("packet_id"));
  CHECK(!ack.contains("score"));  // silent responses omit the score

  const auto read = fx.store->read();
  REQUIRE(read.packets.size() == 1);
  const auto& p = read.packets[0];
  CHECK(p.model_id == "m1");
  CHECK(p.patient_id == req.patient_id);
  CHECK(p.order_id == req.order_id);
  CHECK(p.inference_time == req.order_time);
  CHECK(p.routed.empty());
  CHECK(!p.features.entries.empty());
  CHECK(!p.label.has_value());

  CHECK(fx.world->writeback_log(emr::WritebackTarget::ScoreColumn).empty());
  CHECK(fx.world->writeback_log(emr::WritebackTarget::Flowsheet).empty());
  CHECK(fx.world->writeback_log(emr::WritebackTarget::Inbasket).empty());
  CHECK(fx.world->alert_log().empty());
}

TEST_CASE("duplicate registration conflicts; the first stays live") {
  Fixture fx;
  fx.engine->register_deployment(fx.tiny_bundle(), silent_event());
  CHECK_THROWS_AS(
      fx.engine->register_deployment(fx.tiny_bundle(), silent_event()),
      ConflictError);
  const auto res = fx.engine->handle_event("m1", fx.order_event());
  CHECK(res.status == 200);
}

TEST_CASE("panel mismatch and unknown model are rejected") {
  Fixture fx;
  fx.engine->register_deployment(fx.tiny_bundle(), silent_event());
  auto req = fx.order_event();
  req.panel_code = emr::PanelCode::MAGNESIUM;
  CHECK(fx.engine->handle_event("m1", req).status == 400);
  CHECK(fx.engine->handle_event("other", fx.order_event()).status == 404);
}

TEST_CASE("loud display: configured routes fan out with equal scores") {
  Fixture fx;
  TriggerConfig cfg = silent_event();
  cfg.mode = TriggerConfig::Mode::Loud;
  cfg.routes = {RouteKind::ScoreColumn, RouteKind::Flowsheet};
  fx.engine->register_deployment(fx.tiny_bundle(), cfg);

  const auto res = fx.engine->handle_event("m1", fx.order_event());
  CHECK(res.status == 200);
  const auto ack = nlohmann::json::parse(res.body);
  REQUIRE(ack.contains("score"));

  const auto score_log = fx.world->writeback_log(emr::WritebackTarget::ScoreColumn);
  const auto flow_log = fx.world->writeback_log(emr::WritebackTarget::Flowsheet);
  REQUIRE(score_log.size() == 1);
  REQUIRE(flow_log.size() == 1);
  CHECK(score_log[0].payload.at("score").get<double>() ==
        ack.at("score").get<double>());

  const auto read = fx.store->read();
  REQUIRE(read.packets.size() == 1);
  CHECK(read.packets[0].routed ==
        std::vector<RoutedAction>{{RouteKind::ScoreColumn, true},
                                  {RouteKind::Flowsheet, true}});
  CHECK(score_log[0].payload.at("packet_id") == read.packets[0].packet_id);
}

TEST_CASE("suppress arm: packet stored, nothing routed") {
  Fixture fx;
  TriggerConfig cfg = silent_event();
  cfg.mode = TriggerConfig::Mode::Loud;
  cfg.routes = {RouteKind::ScoreColumn};
  cfg.randomization_p = 1.0;  // always suppress
  fx.engine->register_deployment(fx.tiny_bundle(), cfg);

  const auto res = fx.engine->handle_event("m1", fx.order_event());
  CHECK(res.status == 200);
  const auto read = fx.store->read();
  REQUIRE(read.packets.size() == 1);
  CHECK(read.packets[0].arm == Arm::Suppress);
  CHECK(read.packets[0].routed.empty());
  CHECK(fx.world->writeback_log(emr::WritebackTarget::ScoreColumn).empty());
}

TEST_CASE("alert route returns the XML document instead of writing back") {
  Fixture fx;
  TriggerConfig cfg = silent_event();
  cfg.mode = TriggerConfig::Mode::Loud;
  cfg.routes = {RouteKind::Alert};
  fx.engine->register_deployment(fx.tiny_bundle(), cfg);

  const auto res = fx.engine->handle_event("m1", fx.order_event());
  CHECK(res.status == 200);
  CHECK(res.content_type == "application/xml");
  CHECK(res.body.rfind("<alert>", 0) == 0);
  CHECK(res.body.find("<model_id>m1</model_id>") != std::string::npos);
  CHECK(res.body.find("<score>") != std::string::npos);
  CHECK(res.body.find("<threshold>0.5</threshold>") != std::string::npos);
  CHECK(res.body.find("<message>") != std::string::npos);
  CHECK(fx.world->writeback_log(emr::WritebackTarget::ScoreColumn).empty());
}

TEST_CASE("write-back failure marks the action failed, other routes continue") {
  Fixture fx;
  fx.faulty->broken.insert(emr::WritebackTarget::ScoreColumn);
  TriggerConfig cfg = silent_event();
  cfg.mode = TriggerConfig::Mode::Loud;
  cfg.routes = {RouteKind::ScoreColumn, RouteKind::Flowsheet};
  fx.engine->register_deployment(fx.tiny_bundle(), cfg);

  const auto res = fx.engine->handle_event("m1", fx.order_event());
  CHECK(res.status == 200);
  const auto read = fx.store->read();
  REQUIRE(read.packets.size() == 1);
  CHECK(read.packets[0].routed ==
        std::vector<RoutedAction>{{RouteKind::ScoreColumn, false},
                                  {RouteKind::Flowsheet, true}});
  CHECK(fx.world->writeback_log(emr::WritebackTarget::Flowsheet).size() == 1);
}

TEST_CASE("fetch failure fails closed: 503, no packet, error counted") {
  Fixture fx;
  fx.engine->register_deployment(fx.tiny_bundle(), silent_event());
  ServeEngine::EventRequest req{"ghost", "O999", emr::PanelCode::CBC,
                                fx.clock.now()};
  const auto res = fx.engine->handle_event("m1", req);
  CHECK(res.status == 503);
  CHECK(fx.store->read().packets.empty());
  CHECK(fx.engine->counters().fetch_errors == 1);
  CHECK(fx.engine->counters().packets_appended == 0);
}

TEST_CASE("pause stops new inferences atomically") {
  Fixture fx;
  fx.engine->register_deployment(fx.tiny_bundle(), silent_event());
  CHECK(fx.engine->handle_event("m1", fx.order_event()).status == 200);
  fx.engine->pause("m1");
  CHECK(fx.engine->handle_event("m1", fx.order_event(1)).status == 409);
  CHECK(fx.store->read().packets.size() == 1);
}

TEST_CASE("timer tick: cron gate, roster batch, per-patient fault isolation") {
  Fixture fx(503, 12);  // 12 patients, single unit
  const std::string unit = fx.world->unit_ids()[0];
  const auto roster = fx.world->unit_roster(unit);
  REQUIRE(roster.size() >= 3);

  TriggerConfig cfg;
  cfg.trigger = TriggerConfig::TimerTrigger{"*/15 * * * *", unit};
  cfg.mode = TriggerConfig::Mode::Silent;
  fx.engine->register_deployment(fx.tiny_bundle("timer1"), cfg);

  // Off-schedule minute: no packets.
  CHECK(fx.engine->run_timer_tick("timer1", ts("2022-03-01T00:07:00Z")).empty());

  // Matching minute: one packet per roster patient.
  fx.clock.set(ts("2022-03-01T00:15:00Z"));
  const auto ids = fx.engine->run_timer_tick("timer1", fx.clock.now());
  CHECK(ids.size() == roster.size());
  const auto read = fx.store->read();
  CHECK(read.packets.size() == roster.size());
  for (const auto& p : read.packets) {
    CHECK(!p.order_id.has_value());
    CHECK(p.inference_time == ts("2022-03-01T00:15:00Z"));
  }

  // Unknown unit: the whole tick is skipped and counted.
  TriggerConfig bad = cfg;
  bad.trigger = TriggerConfig::TimerTrigger{"*/15 * * * *", "U404"};
  fx.engine->register_deployment(fx.tiny_bundle("timer2"), bad);
  CHECK(fx.engine->run_timer_tick("timer2", fx.clock.now()).empty());
  CHECK(fx.engine->counters().tick_skips == 1);
}

TEST_CASE("advance_to fires every matching minute across the span") {
  Fixture fx(505, 10);
  const std::string unit = fx.world->unit_ids()[0];
  const auto roster_n = fx.world->unit_roster(unit).size();

  TriggerConfig cfg;
  cfg.trigger = TriggerConfig::TimerTrigger{"*/15 * * * *", unit};
  fx.engine->register_deployment(fx.tiny_bundle("t"), cfg);

  // One virtual hour from the registration point: minutes 15, 30, 45, 60.
  fx.engine->advance_to(fx.clock.now() + hours(1));
  const auto read = fx.store->read();
  CHECK(read.packets.size() == 4 * roster_n);
}

TEST_CASE("packet conservation holds under mixed traffic and faults") {
  Fixture fx(507, 10);
  fx.engine->register_deployment(fx.tiny_bundle(), silent_event());
  int ok_events = 0;
  for (int i = 0; i < 6; ++i) {
    const auto res = fx.engine->handle_event("m1", fx.order_event(i));
    ok_events += res.status == 200 ? 1 : 0;
  }
  ServeEngine::EventRequest bad{"ghost", "O0", emr::PanelCode::CBC,
                                fx.clock.now()};
  fx.engine->handle_event("m1", bad);

  const auto c = fx.engine->counters();
  CHECK(c.callbacks_received == 7);
  CHECK(c.fetch_errors == 1);
  CHECK(c.packets_appended == c.callbacks_received + c.roster_hits -
                                  c.fetch_errors - c.patient_errors -
                                  c.vocab_errors);
  CHECK(fx.store->read().packets.size() == c.packets_appended);
}

TEST_CASE("end-to-end over HTTP: EMR webhook drives the engine") {
  Fixture fx(509, 10);
  emr::EmrHttpServer emr_server(*fx.world, fx.clock);
  emr_server.start();
  emr::HttpEmrClient http_emr("127.0.0.1", emr_server.port());

  PacketStore store2(fx.dir / "store2.jsonl");
  ServeEngine engine2(http_emr, store2, fx.clock);
  engine2.start();
  engine2.register_deployment(fx.tiny_bundle("wired"), silent_event());

  emr::HttpWebhookPoster poster;
  const std::string pid = fx.world->patient_ids()[0];
  fx.world->sign_order(pid, emr::PanelCode::CBC, fx.clock.now(), &poster);
  fx.world->sign_order(pid, emr::PanelCode::METABOLIC, fx.clock.now(), &poster);

  CHECK(engine2.counters().callbacks_received == 1);
  CHECK(store2.read().packets.size() == 1);
  CHECK(fx.world->callback_failures().empty());
  engine2.stop();
  emr_server.stop();
}

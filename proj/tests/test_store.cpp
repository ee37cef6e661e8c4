#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "clinloop/serve/store.hpp"
#include "helpers.hpp"

using namespace clinloop;
using namespace clinloop::serve;
using testutil::ts;

namespace {

InferencePacket make_packet(int i, const std::string& model = "m1") {
  InferencePacket p;
  p.packet_id = model + "-" + std::to_string(i);
  p.model_id = model;
  p.patient_id = "P" + std::to_string(i);
  p.order_id = "O" + std::to_string(i);
  p.inference_time = ts("2022-01-01T00:00:00Z") + i * kHour;
  p.features.entries = {{1, 2}, {7, 1}};
  p.features.vocab_fingerprint = 42;
  p.score = 0.25 + 0.01 * i;
  p.arm = i % 2 == 0 ? Arm::Display : Arm::Suppress;
  p.arm_draw_index = i;
  p.oov_count = i % 3;
  return p;
}

}  // namespace

TEST_CASE("append then read returns packets in append order") {
  const auto dir = testutil::scratch_dir("store1");
  PacketStore store(dir / "s.jsonl");
  for (int i = 0; i < 10; ++i) store.append_packet(make_packet(i));
  const auto read = store.read();
  REQUIRE(read.packets.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(read.packets[i].packet_id == "m1-" + std::to_string(i));
    CHECK(!read.packets[i].label.has_value());
  }
  CHECK(!read.dropped_torn_tail);
  std::filesystem::remove_all(dir);
}

TEST_CASE("packet JSON round trip preserves every field") {
  auto p = make_packet(3);
  p.routed = {{RouteKind::ScoreColumn, true}, {RouteKind::Flowsheet, false}};
  const auto q = InferencePacket::from_json(p.to_json());
  CHECK(q.packet_id == p.packet_id);
  CHECK(q.model_id == p.model_id);
  CHECK(q.patient_id == p.patient_id);
  CHECK(q.order_id == p.order_id);
  CHECK(q.inference_time == p.inference_time);
  CHECK(q.features == p.features);
  CHECK(q.score == p.score);
  CHECK(q.arm == p.arm);
  CHECK(q.arm_draw_index == p.arm_draw_index);
  CHECK(q.routed == p.routed);
  CHECK(q.oov_count == p.oov_count);

  // Timer packets have no order.
  auto timer = make_packet(4);
  timer.order_id.reset();
  CHECK(!InferencePacket::from_json(timer.to_json()).order_id.has_value());
}

TEST_CASE("label updates merge over packets; the file keeps both records") {
  const auto dir = testutil::scratch_dir("store2");
  PacketStore store(dir / "s.jsonl");
  store.append_packet(make_packet(0));
  store.append_packet(make_packet(1));

  LabelUpdate u;
  u.packet_id = "m1-0";
  u.label = true;
  u.label_time = ts("2022-01-01T06:00:00Z");
  u.sex = emr::Sex::Female;
  u.race = emr::Race::Asian;
  u.age_over_40 = true;
  store.append_label_update(u);

  const auto read = store.read();
  REQUIRE(read.packets.size() == 2);
  CHECK(read.packets[0].label == true);
  CHECK(read.packets[0].label_time == u.label_time);
  CHECK(!read.packets[1].label.has_value());
  CHECK(read.updates.size() == 1);

  // Records survive verbatim: 3 lines on disk.
  std::ifstream f(dir / "s.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) ++lines;
  CHECK(lines == 3);

  // A duplicate update does not change the merged view (first wins).
  LabelUpdate dup = u;
  dup.label = false;
  store.append_label_update(dup);
  const auto read2 = store.read();
  CHECK(read2.packets[0].label == true);
  std::filesystem::remove_all(dir);
}

TEST_CASE("torn final record is dropped with a warning") {
  const auto dir = testutil::scratch_dir("store3");
  const auto path = dir / "s.jsonl";
  {
    PacketStore store(path);
    for (int i = 0; i < 5; ++i) store.append_packet(make_packet(i));
  }
  // Simulate a crash mid-append: truncate the last record.
  {
    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content.substr(0, content.size() - 40);
  }
  PacketStore reopened(path);
  const auto read = reopened.read();
  CHECK(read.packets.size() == 4);
  CHECK(read.dropped_torn_tail);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt interior record fails loudly with its line") {
  const auto dir = testutil::scratch_dir("store4");
  const auto path = dir / "s.jsonl";
  {
    PacketStore store(path);
    store.append_packet(make_packet(0));
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << "{garbage\n";
  }
  {
    PacketStore store(path);
    store.append_packet(make_packet(1));
  }
  PacketStore reopened(path);
  try {
    reopened.read();
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("appending after reopen continues the log") {
  const auto dir = testutil::scratch_dir("store5");
  const auto path = dir / "s.jsonl";
  {
    PacketStore store(path);
    store.append_packet(make_packet(0));
  }
  {
    PacketStore store(path);
    store.append_packet(make_packet(1));
    CHECK(store.read().packets.size() == 2);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("filters: model id and time window") {
  const auto dir = testutil::scratch_dir("store6");
  PacketStore store(dir / "s.jsonl");
  for (int i = 0; i < 6; ++i) {
    store.append_packet(make_packet(i, i % 2 == 0 ? "a" : "b"));
  }
  PacketStore::Filter f;
  f.model_id = "a";
  CHECK(store.read(f).packets.size() == 3);

  f = {};
  f.from_time = ts("2022-01-01T02:00:00Z");
  f.to_time = ts("2022-01-01T05:00:00Z");
  const auto read = store.read(f);
  REQUIRE(read.packets.size() == 3);  // hours 2,3,4 (to_time exclusive)
  CHECK(read.packets.front().inference_time == ts("2022-01-01T02:00:00Z"));
  CHECK(read.packets.back().inference_time == ts("2022-01-01T04:00:00Z"));
  std::filesystem::remove_all(dir);
}

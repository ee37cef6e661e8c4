#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "clinloop/emr/client.hpp"
#include "clinloop/monitor/drift.hpp"
#include "clinloop/monitor/labels.hpp"
#include "clinloop/monitor/metrics.hpp"
#include "clinloop/monitor/report.hpp"
#include "helpers.hpp"

using namespace clinloop;
using namespace clinloop::monitor;
using testutil::make_samples;

TEST_CASE("auroc: worked example and boundary cases") {
  CHECK(auroc(make_samples({0.1, 0.4, 0.35, 0.8}, {false, false, true, true})) ==
        doctest::Approx(0.75));
  CHECK(auroc(make_samples({0.1, 0.2, 0.8, 0.9}, {false, false, true, true})) ==
        1.0);
  CHECK(std::isnan(auroc(make_samples({0.1, 0.2}, {true, true}))));
  CHECK(std::isnan(auroc({})));
  // All ties: exactly one half.
  CHECK(auroc(make_samples({0.5, 0.5, 0.5, 0.5}, {true, false, true, false})) ==
        0.5);
}

TEST_CASE("auroc equals exhaustive pair counting on random tied sets") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 49);
    std::vector<double> scores;
    std::vector<bool> labels;
    for (int i = 0; i < n; ++i) {
      scores.push_back((rng() % 8) / 8.0);  // heavy ties
      labels.push_back(rng() % 3 == 0);
    }
    const auto samples = make_samples(scores, labels);
    const double got = auroc(samples);
    const double want = testutil::auroc_pair_count_oracle(samples);
    if (std::isnan(want)) {
      CHECK(std::isnan(got));
    } else {
      CHECK(got == want);  // exact, not approximate
    }
  }
}

TEST_CASE("weighted auroc with equal weights reduces to unweighted") {
  std::mt19937_64 rng(13);
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 60; ++i) {
    LabeledSample s;
    s.score = (rng() % 16) / 16.0;
    s.label = rng() % 2 == 0;
    samples.push_back(s);
  }
  const double base = auroc(samples);
  for (auto& s : samples) s.weight = 2.0;
  CHECK(auroc(samples) == base);
  // Non-uniform weights match the weighted oracle.
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].weight = 1.0 + (i % 4) * 0.5;
  }
  CHECK(auroc(samples) ==
        doctest::Approx(testutil::auroc_pair_count_oracle(samples))
            .epsilon(1e-12));
}

TEST_CASE("roc curve: anchored endpoints, monotone, area identity") {
  std::mt19937_64 rng(17);
  std::vector<double> scores;
  std::vector<bool> labels;
  for (int i = 0; i < 200; ++i) {
    // Unique scores: the trapezoid identity is exact only without ties.
    scores.push_back((i + 0.5) / 200.0 + (rng() % 2 ? 1e-9 : 0.0) * i);
    labels.push_back(rng() % 2 == 0);
  }
  const auto samples = make_samples(scores, labels);
  const auto curve = roc_curve(samples);
  CHECK(curve.front().x == 0.0);
  CHECK(curve.front().y == 0.0);
  CHECK(curve.back().x == 1.0);
  CHECK(curve.back().y == 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].x >= curve[i - 1].x);
    CHECK(curve[i].y >= curve[i - 1].y);
  }
  CHECK(std::abs(trapezoid_area(curve) - auroc(samples)) < 1e-12);

  CHECK_THROWS_AS(roc_curve(make_samples({0.1}, {true})), ValidationError);
}

TEST_CASE("pr curve endpoints and average precision") {
  const auto samples =
      make_samples({0.9, 0.8, 0.3, 0.2}, {true, false, true, false});
  const auto curve = pr_curve(samples);
  // Recall ascends from the highest cut; the final point has recall 1.
  CHECK(curve.front().x == doctest::Approx(0.5));
  CHECK(curve.front().y == doctest::Approx(1.0));
  CHECK(curve.back().x == doctest::Approx(1.0));
  const double ap = average_precision(samples);
  // Cuts: tp/pp pairs (1,1) (1,2) (2,3) (2,4) -> AP = .5*1 + .5*(2/3).
  CHECK(ap == doctest::Approx(0.5 + 0.5 * (2.0 / 3.0)));
}

TEST_CASE("calibration: ten equal-width bins, empty omitted, counts sum") {
  const auto samples = make_samples({0.05, 0.95}, {false, true});
  const auto bins = calibration_curve(samples);
  REQUIRE(bins.size() == 2);
  CHECK(bins[0].x == doctest::Approx(0.05));
  CHECK(bins[0].y == doctest::Approx(0.0));
  CHECK(bins[0].n == 1);
  CHECK(bins[1].x == doctest::Approx(0.95));
  CHECK(bins[1].y == doctest::Approx(1.0));
  CHECK(bins[1].n == 1);

  std::mt19937_64 rng(23);
  std::vector<double> scores;
  std::vector<bool> labels;
  for (int i = 0; i < 500; ++i) {
    scores.push_back((rng() % 1000) / 999.0);
    labels.push_back(rng() % 2 == 0);
  }
  const auto big = calibration_curve(make_samples(scores, labels));
  std::int64_t total = 0;
  for (const auto& b : big) total += b.n;
  CHECK(total == 500);
  // Score 1.0 lands in the top bin, not an eleventh.
  const auto top = calibration_curve(make_samples({1.0}, {true}));
  REQUIRE(top.size() == 1);
  CHECK(top[0].x == 1.0);
}

TEST_CASE("confusion at threshold: worked example and boundaries") {
  const auto samples =
      make_samples({0.1, 0.4, 0.35, 0.8}, {false, false, true, true});
  const auto c = confusion_at_threshold(samples, 0.5);
  CHECK(c.sensitivity == doctest::Approx(0.5));
  CHECK(c.specificity == doctest::Approx(1.0));
  CHECK(c.ppv == doctest::Approx(1.0));
  CHECK(c.accuracy == doctest::Approx(0.75));

  const auto all_pos = confusion_at_threshold(samples, 0.0);
  CHECK(all_pos.sensitivity == doctest::Approx(1.0));
  CHECK(all_pos.specificity == doctest::Approx(0.0));

  const auto none = confusion_at_threshold(samples, 0.99);
  CHECK(none.sensitivity == doctest::Approx(0.0));
  CHECK(none.specificity == doctest::Approx(1.0));
  CHECK(std::isnan(none.ppv));  // zero predicted positives
}

TEST_CASE("bootstrap: constant metric collapses, seeded runs repeat") {
  const auto samples = make_samples({0.2, 0.2, 0.2}, {true, true, false});
  const auto constant = [](const std::vector<LabeledSample>&) { return 3.5; };
  const auto ci = bootstrap_ci(constant, samples, 200, 0.95, 1);
  CHECK(ci.lo == 3.5);
  CHECK(ci.point == 3.5);
  CHECK(ci.hi == 3.5);

  std::mt19937_64 rng(31);
  std::vector<double> scores;
  std::vector<bool> labels;
  for (int i = 0; i < 80; ++i) {
    scores.push_back((rng() % 100) / 99.0);
    labels.push_back(rng() % 2 == 0);
  }
  const auto s2 = make_samples(scores, labels);
  const auto metric = [](const std::vector<LabeledSample>& s) {
    return auroc(s);
  };
  const auto a = bootstrap_ci(metric, s2, 500, 0.95, 77);
  const auto b = bootstrap_ci(metric, s2, 500, 0.95, 77);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  CHECK(a.lo <= a.point);
  CHECK(a.point <= a.hi);

  // Widening the level never narrows the interval on the same seed.
  const auto wide = bootstrap_ci(metric, s2, 500, 0.95, 77);
  const auto narrow = bootstrap_ci(metric, s2, 500, 0.90, 77);
  CHECK(wide.lo <= narrow.lo);
  CHECK(wide.hi >= narrow.hi);
}

TEST_CASE("bootstrap: NaN resamples are excluded and counted") {
  // One positive in three samples: many resamples miss it entirely.
  const auto samples = make_samples({0.9, 0.1, 0.2}, {true, false, false});
  const auto metric = [](const std::vector<LabeledSample>& s) {
    return auroc(s);
  };
  const auto ci = bootstrap_ci(metric, samples, 1000, 0.95, 5);
  CHECK(ci.nan_resamples > 0);
  CHECK(!std::isnan(ci.lo));

  // All-NaN resamples: CI is (NaN, point, NaN).
  const auto nan_metric = [](const std::vector<LabeledSample>&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  const auto nan_ci = bootstrap_ci(nan_metric, samples, 50, 0.95, 5);
  CHECK(std::isnan(nan_ci.lo));
  CHECK(std::isnan(nan_ci.hi));
  CHECK(nan_ci.nan_resamples == 50);
}

TEST_CASE("subgroups: constructed per-group AUROC and NaN degeneracy") {
  std::vector<LabeledSample> samples;
  // Female group: perfectly separated (AUROC 1). Male group: all scores
  // equal (AUROC 0.5). Unknown group: single class (NaN).
  for (int i = 0; i < 20; ++i) {
    LabeledSample s;
    s.sex = emr::Sex::Female;
    s.label = i < 10;
    s.score = s.label ? 0.9 : 0.1;
    s.age_over_40 = true;
    samples.push_back(s);
  }
  for (int i = 0; i < 20; ++i) {
    LabeledSample s;
    s.sex = emr::Sex::Male;
    s.label = i < 10;
    s.score = 0.5;
    s.age_over_40 = false;
    samples.push_back(s);
  }
  for (int i = 0; i < 5; ++i) {
    LabeledSample s;
    s.sex = emr::Sex::Unknown;
    s.label = true;
    s.score = 0.7;
    samples.push_back(s);
  }
  const auto rows = subgroup_metrics(samples, 200, 0.95, 3);

  auto find = [&](const std::string& g) -> const SubgroupRow* {
    for (const auto& r : rows) {
      if (r.group == g) return &r;
    }
    return nullptr;
  };
  REQUIRE(find("full_cohort") != nullptr);
  REQUIRE(find("sex_Female") != nullptr);
  REQUIRE(find("sex_Male") != nullptr);
  REQUIRE(find("sex_Unknown") != nullptr);
  CHECK(find("sex_Female")->auroc_ci.point == 1.0);
  CHECK(find("sex_Male")->auroc_ci.point == 0.5);
  CHECK(std::isnan(find("sex_Unknown")->auroc_ci.point));
  CHECK(std::isnan(find("sex_Unknown")->auroc_ci.lo));

  // Groups partition the cohort for each grouping.
  std::size_t sex_total = 0, age_total = 0;
  for (const auto& r : rows) {
    if (r.group.rfind("sex_", 0) == 0) sex_total += r.n;
    if (r.group.rfind("age_", 0) == 0) age_total += r.n;
  }
  CHECK(sex_total == samples.size());
  CHECK(age_total == samples.size());
}

TEST_CASE("net benefit: direct formula, treat lines") {
  // n=100, threshold pt=0.2: 20 true positives, 10 false positives.
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 20; ++i) {
    LabeledSample s;
    s.score = 0.9;
    s.label = true;
    samples.push_back(s);
  }
  for (int i = 0; i < 10; ++i) {
    LabeledSample s;
    s.score = 0.9;
    s.label = false;
    samples.push_back(s);
  }
  for (int i = 0; i < 70; ++i) {
    LabeledSample s;
    s.score = 0.05;
    s.label = i < 10;  // some positives below threshold
    samples.push_back(s);
  }
  const auto curve = net_benefit(samples, {0.2});
  REQUIRE(curve.size() == 1);
  CHECK(curve[0].net_benefit == doctest::Approx(0.2 - 0.1 * 0.25).epsilon(1e-12));
  CHECK(curve[0].treat_none == 0.0);
  // Treat-all: prevalence - (1-prevalence) * pt/(1-pt).
  CHECK(curve[0].treat_all == doctest::Approx(0.3 - 0.7 * 0.25).epsilon(1e-12));

  // A perfect classifier at pt below every positive score has FP=0:
  // NB = prevalence.
  const auto perfect =
      make_samples({0.9, 0.9, 0.1, 0.1}, {true, true, false, false});
  const auto nb = net_benefit(perfect, {0.5});
  CHECK(nb[0].net_benefit == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(net_benefit(perfect, {0.0}), ValidationError);
  CHECK_THROWS_AS(net_benefit(perfect, {1.0}), ValidationError);
}

TEST_CASE("drift: identical window raises no flags") {
  std::mt19937_64 rng(41);
  std::vector<features::FeatureVector> vecs;
  std::vector<double> scores;
  std::vector<bool> labels;
  for (int i = 0; i < 400; ++i) {
    features::FeatureVector v;
    for (int f = 0; f < 12; ++f) {
      if (rng() % 3 == 0) v.entries[f] = 1 + static_cast<int>(rng() % 3);
    }
    vecs.push_back(v);
    scores.push_back((rng() % 100) / 99.0);
    labels.push_back(rng() % 4 == 0);
  }
  features::Vocabulary vocab(
      {{"t0", 0}, {"t1", 1}, {"t2", 2}, {"t3", 3}, {"t4", 4}, {"t5", 5},
       {"t6", 6}, {"t7", 7}, {"t8", 8}, {"t9", 9}, {"ta", 10}, {"tb", 11}},
      {});
  std::vector<std::string> pids;
  for (int i = 0; i < 400; ++i) pids.push_back("P" + std::to_string(i));
  const auto baseline = build_baseline(vecs, scores, labels, pids, 12);

  std::vector<serve::InferencePacket> packets;
  for (int i = 0; i < 400; ++i) {
    serve::InferencePacket p;
    p.model_id = "m";
    p.patient_id = pids[i];
    p.inference_time = 1000 + i;
    p.features = vecs[i];
    p.score = scores[i];
    if (i % 2 == 0) p.label = labels[i];
    packets.push_back(p);
  }
  const auto snapshot = drift_snapshot(packets, "m", 0, 1'000'000, 12);
  CHECK(snapshot.n == 400);
  const auto flags = drift_flag(snapshot, baseline, vocab, {});
  CHECK(flags.empty());
}

TEST_CASE("drift: an injected mean shift flags that feature only") {
  std::mt19937_64 rng(43);
  std::vector<features::FeatureVector> vecs;
  std::vector<double> scores;
  std::vector<bool> labels;
  for (int i = 0; i < 800; ++i) {
    features::FeatureVector v;
    v.entries[0] = 1 + static_cast<int>(rng() % 3);
    if (rng() % 2 == 0) v.entries[1] = 1;
    vecs.push_back(v);
    scores.push_back(0.3 + (rng() % 100) / 500.0);
    labels.push_back(rng() % 4 == 0);
  }
  features::Vocabulary vocab({{"shifted", 0}, {"stable", 1}}, {});
  std::vector<std::string> pids;
  for (int i = 0; i < 800; ++i) pids.push_back("P" + std::to_string(i));
  const auto baseline = build_baseline(vecs, scores, labels, pids, 2);

  std::vector<serve::InferencePacket> packets;
  std::mt19937_64 rng2(44);
  for (int i = 0; i < 800; ++i) {
    serve::InferencePacket p;
    p.model_id = "m";
    p.patient_id = pids[i];
    p.inference_time = i;
    p.features.entries[0] = 3 + static_cast<int>(rng2() % 3);  // +2 shift
    if (rng2() % 2 == 0) p.features.entries[1] = 1;
    p.score = 0.3 + (rng2() % 100) / 500.0;
    packets.push_back(p);
  }
  const auto snapshot = drift_snapshot(packets, "m", 0, 1'000'000, 2);
  const auto flags = drift_flag(snapshot, baseline, vocab, {});
  REQUIRE(flags.size() == 1);
  CHECK(flags[0].quantity == "feature:shifted");
  CHECK(flags[0].z > 4.0);
}

TEST_CASE("drift: empty window yields an empty snapshot and no flags") {
  features::Vocabulary vocab({{"a", 0}}, {});
  DriftBaseline baseline;
  baseline.n = 100;
  baseline.feature_mean = {0.5};
  baseline.feature_var = {0.25};
  const auto snapshot = drift_snapshot({}, "m", 0, 10, 1);
  CHECK(snapshot.n == 0);
  CHECK(drift_flag(snapshot, baseline, vocab, {}).empty());
}

TEST_CASE("metric report JSON round-trips, NaN rendered literally") {
  std::mt19937_64 rng(53);
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 60; ++i) {
    LabeledSample s;
    s.packet_id = "p" + std::to_string(i);
    s.score = (rng() % 100) / 99.0;
    s.label = rng() % 3 == 0;
    s.sex = i % 2 == 0 ? emr::Sex::Female : emr::Sex::Male;
    s.race = emr::Race::White;
    s.age_over_40 = i % 3 == 0;
    s.inference_time = 1000 + i;
    samples.push_back(s);
  }
  ReportOptions opts;
  opts.bootstrap_B = 100;
  const auto report =
      compute_metric_report("m", "retrospective", 0, 2000, samples, 0.4, opts);
  const auto j = report.to_json();
  const auto back = MetricReport::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.n == 60);
  CHECK(back.auroc_ci.point == report.auroc_ci.point);

  // A single-class cohort renders NaN (as a literal string in JSON).
  const auto degenerate = compute_metric_report(
      "m", "x", 0, 10, make_samples({0.5, 0.6}, {true, true}), 0.5, opts);
  const auto dj = degenerate.to_json();
  CHECK(dj.at("auroc").at("point") == "NaN");
  CHECK(std::isnan(MetricReport::from_json(dj).auroc_ci.point));
}

TEST_CASE("render_report: files, SVG vertex count, empty drift section") {
  std::vector<LabeledSample> samples = make_samples(
      {0.1, 0.3, 0.5, 0.7, 0.9, 0.2}, {false, false, true, true, true, false});
  ReportOptions opts;
  opts.bootstrap_B = 50;
  auto report = compute_metric_report("m", "retrospective", 0, 100, samples,
                                      0.5, opts);
  const auto dir = testutil::scratch_dir("report");
  const auto files = render_report({report}, {}, dir);
  REQUIRE(std::filesystem::exists(files.metrics_json));
  REQUIRE(std::filesystem::exists(files.report_html));

  std::ifstream f(files.report_html);
  const std::string html((std::istreambuf_iterator<char>(f)), {});
  CHECK(html.find("No drift windows computed") != std::string::npos);

  // The ROC polyline has exactly one vertex per curve point.
  const std::string svg =
      svg_line_plot({report.roc}, {"roc"}, "fpr", "tpr", true);
  std::size_t vertices = 0;
  const auto points_pos = svg.find("points=\"");
  REQUIRE(points_pos != std::string::npos);
  const auto end = svg.find('"', points_pos + 8);
  std::string pts = svg.substr(points_pos + 8, end - points_pos - 8);
  vertices = std::count(pts.begin(), pts.end(), ',');
  CHECK(vertices == report.roc.size());
  std::filesystem::remove_all(dir);
}

TEST_CASE("label extraction against the EMR: gate, idempotence, missing") {
  auto world = emr::generate_world(testutil::small_world_config(61, 12));
  VirtualClock clock(testutil::ts("2022-01-01T00:00:00Z"));
  emr::InProcessEmrClient emr_client(*world, clock);

  const auto dir = testutil::scratch_dir("labels");
  serve::PacketStore store(dir / "s.jsonl");

  // Sign orders and store matching packets; withhold results for 2 of them
  // by never signing those orders.
  const auto pids = world->patient_ids();
  std::vector<std::string> packet_ids;
  for (int i = 0; i < 10; ++i) {
    const Timestamp t = clock.now() + i * kHour;
    serve::InferencePacket p;
    p.packet_id = "m-" + std::to_string(i);
    p.model_id = "m";
    p.patient_id = pids[i % pids.size()];
    p.inference_time = t;
    p.score = 0.5;
    if (i < 8) {
      const auto order =
          world->sign_order(p.patient_id, emr::PanelCode::CBC, t, nullptr);
      p.order_id = order.order_id;
    } else {
      p.order_id = "O_never_" + std::to_string(i);  // no such order
    }
    store.append_packet(p);
  }

  OrderResultLabelExtractor extractor("m", "HCT");

  // Before maturation nothing is labeled.
  clock.set(testutil::ts("2022-01-01T00:30:00Z"));
  auto outcome = extractor.run(store, emr_client, hours(2), clock.now());
  CHECK(outcome.labeled == 0);
  CHECK(outcome.immature == 10);

  // After everything matured: 8 labeled, 2 pending (no result exists).
  clock.set(testutil::ts("2022-01-02T00:00:00Z"));
  outcome = extractor.run(store, emr_client, hours(2), clock.now());
  CHECK(outcome.labeled == 8);
  CHECK(outcome.pending == 2);

  // Idempotent: a second run appends nothing.
  outcome = extractor.run(store, emr_client, hours(2), clock.now());
  CHECK(outcome.labeled == 0);
  CHECK(outcome.pending == 2);

  const auto read = store.read();
  int labeled = 0;
  for (const auto& p : read.packets) labeled += p.label.has_value() ? 1 : 0;
  CHECK(labeled == 8);
  // Labels carry the EMR's ground truth for the matching order/component.
  for (const auto& p : read.packets) {
    if (!p.label.has_value()) continue;
    const auto obs =
        world->observation_for_order(*p.order_id, "HCT", clock.now());
    REQUIRE(obs.has_value());
    CHECK(*p.label == obs->abnormal);
    CHECK(*p.label_time == obs->effective_time);
  }
  std::filesystem::remove_all(dir);
}

#include "clinloop/pipeline/stages.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <thread>

#include "clinloop/emr/server.hpp"
#include "clinloop/features/sources.hpp"
#include "clinloop/fnv.hpp"
#include "clinloop/serve/cron.hpp"

namespace clinloop::pipeline {

using nlohmann::json;

TrainOutput train_task(const emr::WarehouseData& warehouse,
                       const TrainConfig& config, std::uint64_t seed) {
  model::Cohort cohort =
      model::build_cohort(warehouse, config.panel, config.component,
                          config.per_year, config.years, seed);
  if (cohort.rows.empty()) throw ValidationError("empty cohort");

  const auto train_rows = cohort.split_rows(model::Split::Train);
  const auto val_rows = cohort.split_rows(model::Split::Validation);
  const auto test_rows = cohort.split_rows(model::Split::Test);
  if (train_rows.empty() || val_rows.empty() || test_rows.empty()) {
    throw ValidationError("a split is empty; widen years or per_year");
  }

  // Vocabulary and edges come from the training years alone.
  std::vector<features::PatientHistory> train_histories;
  train_histories.reserve(train_rows.size());
  for (const auto& r : train_rows) {
    train_histories.push_back(features::load_history_warehouse(
        warehouse, r.patient_id, r.inference_time));
  }
  features::Vocabulary vocab = features::build_vocabulary(train_histories);

  std::vector<std::map<int, int>> x_train;
  std::vector<bool> y_train;
  x_train.reserve(train_rows.size());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    x_train.push_back(
        features::vectorize(
            features::tokenize_history(train_histories[i], vocab), vocab)
            .vector.entries);
    y_train.push_back(train_rows[i].label);
  }
  train_histories.clear();
  train_histories.shrink_to_fit();

  model::Forest forest =
      model::train_forest(x_train, y_train, static_cast<int>(vocab.size()),
                          config.hyperparams, seed);

  auto score_rows = [&](const std::vector<model::CohortRow>& rows,
                        std::vector<features::FeatureVector>* keep_vectors)
      -> std::vector<double> {
    std::vector<double> scores;
    scores.reserve(rows.size());
    for (const auto& r : rows) {
      const auto hist = features::load_history_warehouse(warehouse, r.patient_id,
                                                         r.inference_time);
      auto vec = features::featurize(hist, vocab).vector;
      scores.push_back(forest.predict(vec.entries));
      if (keep_vectors != nullptr) keep_vectors->push_back(std::move(vec));
    }
    return scores;
  };

  const std::vector<double> val_scores = score_rows(val_rows, nullptr);
  std::vector<bool> val_labels;
  for (const auto& r : val_rows) val_labels.push_back(r.label);
  const model::ThresholdChoice threshold =
      model::select_threshold(val_scores, val_labels);
  if (threshold.degenerate) {
    std::fprintf(stderr,
                 "[train] warning: degenerate validation split, threshold 0.5\n");
  }

  std::vector<features::FeatureVector> test_vectors;
  const std::vector<double> test_scores = score_rows(test_rows, &test_vectors);
  std::vector<bool> test_labels;
  for (const auto& r : test_rows) test_labels.push_back(r.label);

  TrainOutput out;
  out.cohort_rows = cohort.rows.size();
  out.dropped_missing_result = cohort.dropped_missing_result;
  out.threshold_degenerate = threshold.degenerate;

  Timestamp created_at = 0;
  for (const auto& r : cohort.rows) {
    created_at = std::max(created_at, r.inference_time);
  }

  std::string model_id = config.model_id;
  if (model_id.empty()) {
    model_id = emr::to_string(config.panel) + "_" + config.component;
    std::transform(model_id.begin(), model_id.end(), model_id.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
  }

  Fnv64 tf;
  tf.update(model_id)
      .update_u64(seed)
      .update_u64(vocab.fingerprint())
      .update_u64(cohort.rows.size())
      .update_u64(config.hyperparams.n_trees)
      .update_u64(config.hyperparams.max_depth)
      .update_u64(config.hyperparams.min_leaf)
      .update_u64(std::count(y_train.begin(), y_train.end(), true));

  out.bundle.model_id = model_id;
  out.bundle.panel_code = config.panel;
  out.bundle.component_code = config.component;
  out.bundle.vocabulary = std::move(vocab);
  out.bundle.forest = std::move(forest);
  out.bundle.decision_threshold = threshold.value;
  out.bundle.created_at = created_at;
  out.bundle.training_fingerprint = tf.digest();
  out.bundle.validate();

  out.test_window_start = test_rows.front().inference_time;
  out.test_window_end = test_rows.back().inference_time + 1;
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    const auto& r = test_rows[i];
    const emr::PatientRecord* rec = warehouse.find_patient(r.patient_id);
    monitor::LabeledSample s;
    s.packet_id = r.order_id;
    s.score = test_scores[i];
    s.label = test_labels[i];
    s.inference_time = r.inference_time;
    if (rec != nullptr) {
      s.sex = rec->sex;
      s.race = rec->race;
      s.age_over_40 = age_years(rec->birth_date, r.inference_time) > 40.0;
    }
    out.retro_test_samples.push_back(std::move(s));
  }

  std::vector<std::string> test_patient_ids;
  for (const auto& r : test_rows) test_patient_ids.push_back(r.patient_id);
  out.baseline =
      monitor::build_baseline(test_vectors, test_scores, test_labels,
                              test_patient_ids, out.bundle.vocabulary.size());
  return out;
}

namespace {

json sample_to_json(const monitor::LabeledSample& s) {
  return {{"packet_id", s.packet_id},
          {"score", s.score},
          {"label", s.label},
          {"inference_time", format_rfc3339(s.inference_time)},
          {"sex", emr::to_string(s.sex)},
          {"race", emr::to_string(s.race)},
          {"age_over_40", s.age_over_40},
          {"weight", s.weight}};
}

monitor::LabeledSample sample_from_json(const json& j) {
  monitor::LabeledSample s;
  s.packet_id = j.at("packet_id").get<std::string>();
  s.score = j.at("score").get<double>();
  s.label = j.at("label").get<bool>();
  s.inference_time = parse_rfc3339(j.at("inference_time").get<std::string>());
  s.sex = emr::sex_from_string(j.at("sex").get<std::string>());
  s.race = emr::race_from_string(j.at("race").get<std::string>());
  s.age_over_40 = j.at("age_over_40").get<bool>();
  s.weight = j.at("weight").get<double>();
  return s;
}

}  // namespace

void save_eval(const TrainOutput& out, const std::filesystem::path& path) {
  json samples = json::array();
  for (const auto& s : out.retro_test_samples) samples.push_back(sample_to_json(s));
  const json j = {{"format_version", 1},
                  {"model_id", out.bundle.model_id},
                  {"threshold", out.bundle.decision_threshold},
                  {"window_start", format_rfc3339(out.test_window_start)},
                  {"window_end", format_rfc3339(out.test_window_end)},
                  {"samples", samples},
                  {"baseline", out.baseline.to_json()}};
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: '" + path.string() + "'");
}

EvalArtifact load_eval(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read '" + path.string() + "'");
  json j;
  f >> j;
  EvalArtifact e;
  e.model_id = j.at("model_id").get<std::string>();
  e.threshold = j.at("threshold").get<double>();
  e.window_start = parse_rfc3339(j.at("window_start").get<std::string>());
  e.window_end = parse_rfc3339(j.at("window_end").get<std::string>());
  for (const auto& s : j.at("samples")) e.samples.push_back(sample_from_json(s));
  e.baseline = monitor::DriftBaseline::from_json(j.at("baseline"));
  return e;
}

SimResult run_sim(emr::World& world,
                  const std::vector<DeploymentSpec>& deployments,
                  serve::PacketStore& store, const MonitorConfig& monitor_cfg,
                  Duration duration, const std::filesystem::path& orders_log,
                  double wall_time_scale) {
  SimResult result;
  result.sim_start = world.config().history_end;
  result.sim_end = result.sim_start + duration;

  VirtualClock clock(result.sim_start);
  emr::EmrHttpServer emr_server(world, clock);
  emr_server.start();
  emr::HttpEmrClient emr_client("127.0.0.1", emr_server.port());

  serve::ServeEngine engine(emr_client, store, clock);
  engine.start();

  std::optional<emr::PanelCode> event_panel;
  std::vector<std::pair<std::string, std::string>> extract_targets;
  for (const auto& spec : deployments) {
    engine.register_deployment(spec.bundle, spec.trigger);
    if (const auto* ev = std::get_if<serve::TriggerConfig::EventTrigger>(
            &spec.trigger.trigger);
        ev != nullptr && !event_panel) {
      event_panel = ev->panel_code;
    }
    extract_targets.emplace_back(spec.bundle.model_id,
                                 spec.bundle.component_code);
  }

  std::ofstream olog(orders_log, std::ios::binary | std::ios::trunc);
  if (!olog) throw IoError("cannot write '" + orders_log.string() + "'");

  serve::CronExpr extract_cron =
      serve::CronExpr::parse(monitor_cfg.extractor_cron);
  Timestamp next_extract = extract_cron.next_after(result.sim_start);

  emr::HttpWebhookPoster poster;
  auto run_extraction = [&](Timestamp now) {
    clock.set(now);
    for (const auto& [model_id, component] : extract_targets) {
      monitor::OrderResultLabelExtractor extractor(model_id, component);
      const auto outcome =
          extractor.run(store, emr_client, monitor_cfg.maturation, now);
      result.labels_extracted_in_run += outcome.labeled;
    }
  };

  Timestamp prev_event = result.sim_start;
  for (const auto& po : world.planned_sim_orders()) {
    if (po.order_time < result.sim_start) continue;
    if (po.order_time >= result.sim_end) break;

    if (wall_time_scale > 0.0 && po.order_time > prev_event) {
      std::this_thread::sleep_for(std::chrono::duration<double>(
          static_cast<double>(po.order_time - prev_event) / wall_time_scale));
    }
    prev_event = po.order_time;

    engine.advance_to(po.order_time);
    while (next_extract <= po.order_time) {
      run_extraction(next_extract);
      next_extract = extract_cron.next_after(next_extract);
    }
    clock.set(po.order_time);

    const emr::DiagnosticOrder order =
        world.sign_order(po.patient_id, po.panel_code, po.order_time, &poster);
    ++result.orders_signed;
    if (event_panel && po.panel_code == *event_panel) {
      ++result.orders_matching_panel;
    }
    olog << json{{"order_id", order.order_id},
                 {"patient_id", po.patient_id},
                 {"panel_code", emr::to_string(po.panel_code)},
                 {"order_time", format_rfc3339(po.order_time)}}
                .dump()
         << '\n';
  }
  olog.flush();
  if (!olog) throw IoError("write failed: '" + orders_log.string() + "'");

  engine.advance_to(result.sim_end);
  while (next_extract <= result.sim_end) {
    run_extraction(next_extract);
    next_extract = extract_cron.next_after(next_extract);
  }
  clock.set(result.sim_end);

  result.counters = engine.counters();
  result.callback_failures = world.callback_failures().size();
  engine.stop();
  emr_server.stop();
  return result;
}

monitor::LabelExtractor::Outcome extract_labels_replay(
    const emr::WorldConfig& world_config,
    const std::filesystem::path& orders_log, serve::PacketStore& store,
    const std::string& model_id, const std::string& component_code,
    Duration maturation) {
  auto world = emr::generate_world(world_config);

  std::ifstream f(orders_log, std::ios::binary);
  if (!f) throw IoError("cannot read '" + orders_log.string() + "'");
  std::string line;
  Timestamp last_time = world_config.history_end;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const emr::DiagnosticOrder order = world->sign_order(
        j.at("patient_id").get<std::string>(),
        emr::panel_from_string(j.at("panel_code").get<std::string>()),
        parse_rfc3339(j.at("order_time").get<std::string>()), nullptr);
    if (order.order_id != j.at("order_id").get<std::string>()) {
      throw IntegrityError("order replay diverged at '" + order.order_id + "'");
    }
    last_time = std::max(last_time, order.order_time);
  }

  const Timestamp now =
      last_time + std::max(maturation, world_config.result_delay);
  VirtualClock clock(now);
  emr::EmrHttpServer server(*world, clock);
  server.start();
  emr::HttpEmrClient client("127.0.0.1", server.port());
  monitor::OrderResultLabelExtractor extractor(model_id, component_code);
  const auto outcome = extractor.run(store, client, maturation, now);
  server.stop();
  return outcome;
}

std::vector<monitor::LabeledSample> prospective_samples(
    const serve::PacketStore::ReadResult& read) {
  std::map<std::string, const serve::LabelUpdate*> updates;
  for (const auto& u : read.updates) {
    updates.emplace(u.packet_id, &u);
  }
  std::vector<monitor::LabeledSample> out;
  for (const auto& p : read.packets) {
    if (!p.label.has_value()) continue;
    auto it = updates.find(p.packet_id);
    monitor::LabeledSample s;
    s.packet_id = p.packet_id;
    s.score = p.score;
    s.label = *p.label;
    s.inference_time = p.inference_time;
    if (it != updates.end()) {
      s.sex = it->second->sex;
      s.race = it->second->race;
      s.age_over_40 = it->second->age_over_40;
    }
    out.push_back(std::move(s));
  }
  return out;
}

ReportOutput report_stage(const EvalArtifact& eval, serve::PacketStore& store,
                          const model::ModelBundle& bundle,
                          const MonitorConfig& monitor_cfg,
                          const std::filesystem::path& out_dir) {
  monitor::ReportOptions opts;
  opts.bootstrap_B = monitor_cfg.bootstrap_B;
  opts.ci_level = monitor_cfg.ci_level;
  opts.bootstrap_seed = monitor_cfg.bootstrap_seed;

  ReportOutput out;
  out.retrospective = monitor::compute_metric_report(
      eval.model_id, "retrospective", eval.window_start, eval.window_end,
      eval.samples, eval.threshold, opts);

  serve::PacketStore::Filter filter;
  filter.model_id = eval.model_id;
  const auto read = store.read(filter);
  const auto samples = prospective_samples(read);

  Timestamp w0 = 0;
  Timestamp w1 = 0;
  for (const auto& p : read.packets) {
    if (w0 == 0 || p.inference_time < w0) w0 = p.inference_time;
    if (p.inference_time + 1 > w1) w1 = p.inference_time + 1;
  }
  out.prospective = monitor::compute_metric_report(
      eval.model_id, "prospective", w0, w1, samples, eval.threshold, opts);

  const auto snapshot = monitor::drift_snapshot(read.packets, eval.model_id, w0,
                                                w1, bundle.vocabulary.size());
  monitor::DriftFlagOptions flag_opts;
  flag_opts.k = monitor_cfg.drift_k;
  flag_opts.min_baseline_occurrences =
      monitor_cfg.drift_min_baseline_occurrences;
  if (snapshot.n > 0) {
    out.drift.push_back(monitor::build_drift_report(
        snapshot, eval.baseline, bundle.vocabulary, flag_opts));
  }
  out.files = monitor::render_report({out.retrospective, out.prospective},
                                     out.drift, out_dir);
  return out;
}

std::uint64_t file_digest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read '" + path.string() + "'");
  Fnv64 h;
  char buf[65536];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    h.update(std::string_view(buf, static_cast<std::size_t>(f.gcount())));
  }
  return h.digest();
}

Manifest Manifest::open(const std::filesystem::path& dir) {
  Manifest m;
  m.path_ = dir / "manifest.json";
  if (std::filesystem::exists(m.path_)) {
    std::ifstream f(m.path_, std::ios::binary);
    f >> m.doc_;
  } else {
    m.doc_ = {{"format_version", 1}, {"stages", json::object()}};
  }
  return m;
}

void Manifest::record_stage(const std::string& stage, const json& detail) {
  doc_["stages"][stage] = detail;
}

void Manifest::save() const {
  std::ofstream f(path_, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path_.string() + "'");
  f << doc_.dump(2) << '\n';
}

}  // namespace clinloop::pipeline

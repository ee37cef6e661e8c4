// clinloop: train count-featurized lab classifiers on a simulated EMR's
// warehouse export, deploy them behind event/timer triggers against the
// EMR's real-time API, and monitor them through silent prospective trials.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "clinloop/emr/server.hpp"
#include "clinloop/features/sources.hpp"
#include "clinloop/pipeline/stages.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clinloop;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;  // 0 = keep config value
};

// Wall-clock cost of the enclosing stage, recorded into the manifest.
class StageTimer {
 public:
  StageTimer(std::string stage, std::string out_dir)
      : stage_(std::move(stage)), out_dir_(std::move(out_dir)),
        start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - start_)
                        .count();
    try {
      auto manifest = pipeline::Manifest::open(out_dir_);
      auto doc = manifest.doc();
      if (doc.at("stages").contains(stage_)) {
        auto detail = doc.at("stages").at(stage_);
        detail["wall_ms"] = ms;
        manifest.record_stage(stage_, detail);
        manifest.save();
      }
    } catch (const std::exception&) {
      // A failed stage has no manifest entry to annotate.
    }
  }

 private:
  std::string stage_;
  std::string out_dir_;
  std::chrono::steady_clock::time_point start_;
};

pipeline::Config load_config(const CommonArgs& args) {
  pipeline::Config cfg = pipeline::Config::defaults();
  const fs::path canonical = fs::path(args.out_dir) / "config.json";
  if (!args.config_path.empty()) {
    std::ifstream f(args.config_path, std::ios::binary);
    if (!f) throw IoError("cannot read '" + args.config_path + "'");
    json j;
    f >> j;
    cfg = pipeline::Config::from_json(j);
  } else if (fs::exists(canonical)) {
    std::ifstream f(canonical, std::ios::binary);
    json j;
    f >> j;
    cfg = pipeline::Config::from_json(j);
  }
  if (args.seed != 0) cfg.world.seed = args.seed;
  return cfg;
}

void write_config(const pipeline::Config& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir / "config.json", std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write config.json");
  f << cfg.to_json().dump(2) << '\n';
}

void stage_gen_world(const CommonArgs& args) {
  StageTimer timer("gen-world", args.out_dir);
  pipeline::Config cfg = load_config(args);
  cfg.world.validate();
  auto world = emr::generate_world(cfg.world);
  write_config(cfg, args.out_dir);
  auto manifest = pipeline::Manifest::open(args.out_dir);
  manifest.record_stage(
      "gen-world",
      {{"seed", cfg.world.seed},
       {"n_patients", cfg.world.n_patients},
       {"orders", world->n_orders()},
       {"config_digest",
        fnv1a64(pipeline::world_config_to_json(cfg.world).dump())}});
  manifest.save();
  std::printf("gen-world: %d patients, %zu historical orders, %zu planned\n",
              cfg.world.n_patients, world->n_orders(),
              world->planned_sim_orders().size());
}

void stage_export_warehouse(const CommonArgs& args, const std::string& up_to) {
  StageTimer timer("export-warehouse", args.out_dir);
  pipeline::Config cfg = load_config(args);
  auto world = emr::generate_world(cfg.world);
  const Timestamp horizon =
      up_to.empty() ? cfg.world.history_end : parse_rfc3339(up_to);
  const fs::path dest = fs::path(args.out_dir) / "warehouse";
  emr::export_warehouse(*world, horizon, dest);
  auto manifest = pipeline::Manifest::open(args.out_dir);
  manifest.record_stage(
      "export-warehouse",
      {{"up_to", format_rfc3339(horizon)},
       {"events_digest", pipeline::file_digest(dest / "events.tsv")},
       {"orders_digest", pipeline::file_digest(dest / "orders.tsv")}});
  manifest.save();
  std::printf("export-warehouse: wrote %s (up to %s)\n", dest.c_str(),
              format_rfc3339(horizon).c_str());
}

void stage_build_cohort(const CommonArgs& args) {
  StageTimer timer("build-cohort", args.out_dir);
  pipeline::Config cfg = load_config(args);
  const auto wh = emr::WarehouseData::load(fs::path(args.out_dir) / "warehouse");
  const auto cohort =
      model::build_cohort(wh, cfg.train.panel, cfg.train.component,
                          cfg.train.per_year, cfg.train.years, cfg.world.seed);
  const fs::path path = fs::path(args.out_dir) / "cohort.tsv";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << "order_id\tpatient_id\tpanel_code\tcomponent_code\tinference_time\t"
       "label\tsplit\n";
  for (const auto& r : cohort.rows) {
    f << r.order_id << '\t' << r.patient_id << '\t'
      << emr::to_string(r.panel_code) << '\t' << r.component_code << '\t'
      << format_rfc3339(r.inference_time) << '\t'
      << (r.label ? "true" : "false") << '\t' << model::to_string(r.split)
      << '\n';
  }
  auto manifest = pipeline::Manifest::open(args.out_dir);
  manifest.record_stage(
      "build-cohort",
      {{"rows", cohort.rows.size()},
       {"dropped_missing_result", cohort.dropped_missing_result},
       {"cohort_digest", pipeline::file_digest(path)}});
  manifest.save();
  std::printf("build-cohort: %zu rows (%d dropped for missing results)\n",
              cohort.rows.size(), cohort.dropped_missing_result);
}

void stage_train(const CommonArgs& args) {
  StageTimer timer("train", args.out_dir);
  pipeline::Config cfg = load_config(args);
  const auto wh = emr::WarehouseData::load(fs::path(args.out_dir) / "warehouse");
  const auto out = pipeline::train_task(wh, cfg.train, cfg.world.seed);
  const fs::path bundle_path = fs::path(args.out_dir) / "bundle.json";
  const fs::path eval_path = fs::path(args.out_dir) / "eval.json";
  model::save_bundle(out.bundle, bundle_path);
  pipeline::save_eval(out, eval_path);

  const double retro_auroc = monitor::auroc(out.retro_test_samples);
  auto manifest = pipeline::Manifest::open(args.out_dir);
  manifest.record_stage("train",
                        {{"model_id", out.bundle.model_id},
                         {"cohort_rows", out.cohort_rows},
                         {"vocabulary_size", out.bundle.vocabulary.size()},
                         {"threshold", out.bundle.decision_threshold},
                         {"retro_test_auroc", retro_auroc},
                         {"bundle_digest", pipeline::file_digest(bundle_path)},
                         {"eval_digest", pipeline::file_digest(eval_path)}});
  manifest.save();
  std::printf("train: %s  V=%zu  threshold=%.3f  retro test AUROC=%.3f\n",
              out.bundle.model_id.c_str(), out.bundle.vocabulary.size(),
              out.bundle.decision_threshold, retro_auroc);
}

void stage_deploy(const CommonArgs& args, const std::string& mode,
                  const std::string& trigger_kind, const std::string& cron,
                  const std::string& unit, const std::string& routes_csv,
                  double randomization_p, std::uint64_t rng_seed) {
  pipeline::Config cfg = load_config(args);
  serve::TriggerConfig trigger = cfg.trigger;
  if (trigger_kind == "event") {
    trigger.trigger = serve::TriggerConfig::EventTrigger{cfg.train.panel};
  } else if (trigger_kind == "timer") {
    trigger.trigger = serve::TriggerConfig::TimerTrigger{cron, unit};
  } else if (!trigger_kind.empty()) {
    throw ValidationError("trigger must be 'event' or 'timer'");
  }
  if (mode == "silent") trigger.mode = serve::TriggerConfig::Mode::Silent;
  if (mode == "loud") trigger.mode = serve::TriggerConfig::Mode::Loud;
  if (!routes_csv.empty()) {
    trigger.routes.clear();
    std::string cur;
    for (char c : routes_csv + ",") {
      if (c == ',') {
        if (!cur.empty()) trigger.routes.push_back(serve::route_from_string(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
  }
  trigger.randomization_p = randomization_p;
  if (rng_seed != 0) trigger.rng_seed = rng_seed;
  trigger.validate();

  // Validate that the referenced bundle loads before recording.
  const fs::path bundle_path = fs::path(args.out_dir) / "bundle.json";
  const auto bundle = model::load_bundle(bundle_path);

  json deployments = json::array();
  const fs::path dep_path = fs::path(args.out_dir) / "deployments.json";
  if (fs::exists(dep_path)) {
    std::ifstream f(dep_path, std::ios::binary);
    f >> deployments;
  }
  deployments.push_back({{"bundle", "bundle.json"},
                         {"model_id", bundle.model_id},
                         {"trigger", trigger.to_json()}});
  std::ofstream f(dep_path, std::ios::binary | std::ios::trunc);
  f << deployments.dump(2) << '\n';
  std::printf("deploy: %s (%s)\n", bundle.model_id.c_str(),
              trigger.mode == serve::TriggerConfig::Mode::Silent ? "silent"
                                                                 : "loud");
}

emr::WorldConfig effective_sim_world(pipeline::Config& cfg, double rate,
                                     const std::string& drift_at,
                                     double covariate_shift,
                                     double concept_shift) {
  emr::WorldConfig world = cfg.world;
  if (rate > 0.0) world.sim_rate = rate;
  if (!drift_at.empty()) {
    emr::DriftConfig drift;
    drift.start_time = world.history_end + pipeline::parse_duration(drift_at);
    drift.covariate_shift = covariate_shift;
    drift.concept_shift = concept_shift;
    world.drift = drift;
  }
  return world;
}

void stage_run_sim(const CommonArgs& args, const std::string& duration,
                   double rate, const std::string& mode,
                   const std::string& drift_at, double covariate_shift,
                   double concept_shift, bool wall, double time_scale) {
  StageTimer timer("run-sim", args.out_dir);
  pipeline::Config cfg = load_config(args);
  if (!duration.empty()) cfg.sim.duration = pipeline::parse_duration(duration);
  emr::WorldConfig world_cfg = effective_sim_world(
      cfg, rate, drift_at, covariate_shift, concept_shift);

  const fs::path dep_path = fs::path(args.out_dir) / "deployments.json";
  if (!fs::exists(dep_path)) {
    throw ValidationError("no deployments.json; run `deploy` first");
  }
  json deployments_j;
  {
    std::ifstream f(dep_path, std::ios::binary);
    f >> deployments_j;
  }
  std::vector<pipeline::DeploymentSpec> deployments;
  for (const auto& d : deployments_j) {
    pipeline::DeploymentSpec spec;
    spec.bundle = model::load_bundle(fs::path(args.out_dir) /
                                     d.at("bundle").get<std::string>());
    spec.trigger = serve::TriggerConfig::from_json(d.at("trigger"));
    if (mode == "silent") spec.trigger.mode = serve::TriggerConfig::Mode::Silent;
    if (mode == "loud") spec.trigger.mode = serve::TriggerConfig::Mode::Loud;
    deployments.push_back(std::move(spec));
  }

  auto world = emr::generate_world(world_cfg);
  serve::PacketStore store(fs::path(args.out_dir) / "store.jsonl");
  const auto result = pipeline::run_sim(
      *world, deployments, store, cfg.monitor, cfg.sim.duration,
      fs::path(args.out_dir) / "orders.jsonl", wall ? time_scale : 0.0);

  // Persist the effective world so extract-labels can replay it.
  {
    std::ofstream f(fs::path(args.out_dir) / "sim.json",
                    std::ios::binary | std::ios::trunc);
    f << json{{"world", pipeline::world_config_to_json(world_cfg)},
              {"sim_start", format_rfc3339(result.sim_start)},
              {"sim_end", format_rfc3339(result.sim_end)}}
             .dump(2)
      << '\n';
  }
  auto manifest = pipeline::Manifest::open(args.out_dir);
  manifest.record_stage(
      "run-sim",
      {{"orders_signed", result.orders_signed},
       {"callbacks", result.counters.callbacks_received},
       {"packets", result.counters.packets_appended},
       {"fetch_errors", result.counters.fetch_errors},
       {"virtual_span",
        {format_rfc3339(result.sim_start), format_rfc3339(result.sim_end)}},
       {"orders_digest",
        pipeline::file_digest(fs::path(args.out_dir) / "orders.jsonl")}});
  manifest.save();
  std::printf(
      "run-sim: %zu orders signed, %zu callbacks, %zu packets, %zu errors\n",
      result.orders_signed, result.counters.callbacks_received,
      result.counters.packets_appended, result.counters.fetch_errors);
}

void stage_extract_labels(const CommonArgs& args, const std::string& maturation) {
  StageTimer timer("extract-labels", args.out_dir);
  pipeline::Config cfg = load_config(args);
  const fs::path sim_path = fs::path(args.out_dir) / "sim.json";
  if (!fs::exists(sim_path)) {
    throw ValidationError("no sim.json; run `run-sim` first");
  }
  json sim_j;
  {
    std::ifstream f(sim_path, std::ios::binary);
    f >> sim_j;
  }
  const emr::WorldConfig world_cfg =
      pipeline::world_config_from_json(sim_j.at("world"));
  const Duration matur = maturation.empty()
                             ? cfg.monitor.maturation
                             : pipeline::parse_duration(maturation);
  serve::PacketStore store(fs::path(args.out_dir) / "store.jsonl");
  const auto outcome = pipeline::extract_labels_replay(
      world_cfg, fs::path(args.out_dir) / "orders.jsonl", store,
      cfg.resolved_model_id(), cfg.train.component, matur);
  auto manifest = pipeline::Manifest::open(args.out_dir);
  manifest.record_stage("extract-labels", {{"labeled", outcome.labeled},
                                           {"pending", outcome.pending},
                                           {"errors", outcome.errors}});
  manifest.save();
  std::printf("extract-labels: %d labeled, %d pending, %d errors\n",
              outcome.labeled, outcome.pending, outcome.errors);
}

void stage_report(const CommonArgs& args) {
  StageTimer timer("report", args.out_dir);
  pipeline::Config cfg = load_config(args);
  const auto eval = pipeline::load_eval(fs::path(args.out_dir) / "eval.json");
  const auto bundle = model::load_bundle(fs::path(args.out_dir) / "bundle.json");
  serve::PacketStore store(fs::path(args.out_dir) / "store.jsonl");
  const auto out =
      pipeline::report_stage(eval, store, bundle, cfg.monitor, args.out_dir);

  auto manifest = pipeline::Manifest::open(args.out_dir);
  manifest.record_stage(
      "report",
      {{"metrics_digest", pipeline::file_digest(out.files.metrics_json)},
       {"retro_auroc", out.retrospective.auroc_ci.point},
       {"prospective_auroc", out.prospective.auroc_ci.point},
       {"prospective_n", out.prospective.n},
       {"drift_flags",
        out.drift.empty() ? 0 : static_cast<int>(out.drift[0].flags.size())}});
  manifest.save();
  std::printf("report: retro AUROC=%.3f prospective AUROC=%.3f (n=%zu) -> %s\n",
              out.retrospective.auroc_ci.point, out.prospective.auroc_ci.point,
              out.prospective.n, out.files.report_html.c_str());
}

int stage_parity_check(const CommonArgs& args, int n, int n_patients) {
  pipeline::Config cfg = load_config(args);
  if (n_patients > 0) cfg.world.n_patients = n_patients;
  auto world = emr::generate_world(cfg.world);

  const fs::path wh_dir = fs::path(args.out_dir) / "parity_warehouse";
  emr::export_warehouse(*world, cfg.world.sim_horizon, wh_dir);
  const auto wh = emr::WarehouseData::load(wh_dir);

  VirtualClock clock(cfg.world.sim_horizon);
  emr::EmrHttpServer server(*world, clock);
  server.start();
  emr::HttpEmrClient client("127.0.0.1", server.port());

  const auto ids = world->patient_ids();
  Rng rng = Rng::keyed(cfg.world.seed, "parity");
  int mismatches = 0;
  for (int i = 0; i < n; ++i) {
    const std::string& pid = ids[rng.index(ids.size())];
    const Timestamp t =
        cfg.world.history_start + days(90) +
        static_cast<Timestamp>(
            rng.u01() * static_cast<double>(cfg.world.sim_horizon - days(90) -
                                            cfg.world.history_start));
    const auto h_api = features::fetch_history_transactional(client, pid, t);
    const auto h_wh = features::load_history_warehouse(wh, pid, t);
    // Any shared vocabulary works for the vector comparison.
    static const features::Vocabulary empty_vocab({}, {});
    const auto v_api = features::featurize(h_api, empty_vocab);
    const auto v_wh = features::featurize(h_wh, empty_vocab);
    if (!(h_api == h_wh) || !(v_api.vector == v_wh.vector) ||
        v_api.oov_count != v_wh.oov_count) {
      ++mismatches;
      std::fprintf(stderr, "parity mismatch: patient=%s t=%s\n", pid.c_str(),
                   format_rfc3339(t).c_str());
    }
  }
  server.stop();
  std::printf("parity-check: %d/%d pairs matched\n", n - mismatches, n);
  return mismatches == 0 ? 0 : 1;
}

void stage_demo(const CommonArgs& args, const std::string& duration, double rate,
                const std::string& mode, const std::string& drift_at,
                double covariate_shift, double concept_shift) {
  stage_gen_world(args);
  stage_export_warehouse(args, "");
  stage_build_cohort(args);
  stage_train(args);
  {
    // Fresh deployment list and store per demo run.
    std::error_code ec;
    fs::remove(fs::path(args.out_dir) / "deployments.json", ec);
    fs::remove(fs::path(args.out_dir) / "store.jsonl", ec);
  }
  stage_deploy(args, mode.empty() ? "silent" : mode, "event", "", "", "", 0.0,
               0);
  stage_run_sim(args, duration, rate, mode, drift_at, covariate_shift,
                concept_shift, false, 0.0);
  stage_extract_labels(args, "");
  stage_report(args);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clinloop: silent-trial deployment loop for clinical ML models"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string duration, mode, drift_at, up_to, maturation;
  std::string trigger_kind, cron_expr, unit_id, routes_csv;
  double rate = 0.0, randomization_p = 0.0, covariate_shift = 0.0,
         concept_shift = 1.0, time_scale = 3600.0;
  std::uint64_t rng_seed = 0;
  int parity_n = 1000, parity_patients = 0;
  bool wall = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "config JSON path");
    cmd->add_option("--out", common.out_dir, "artifact directory");
    cmd->add_option("--seed", common.seed, "world seed override");
  };

  auto* gen = app.add_subcommand("gen-world", "generate the simulated EMR world");
  add_common(gen);

  auto* exp =
      app.add_subcommand("export-warehouse", "export the flat warehouse files");
  add_common(exp);
  exp->add_option("--up-to", up_to, "export horizon (RFC3339)");

  auto* coh = app.add_subcommand("build-cohort", "sample the task cohort");
  add_common(coh);

  auto* trn =
      app.add_subcommand("train", "train the forest and select a threshold");
  add_common(trn);

  auto* dep = app.add_subcommand("deploy", "record a deployment");
  add_common(dep);
  dep->add_option("--mode", mode, "silent|loud");
  dep->add_option("--trigger", trigger_kind, "event|timer");
  dep->add_option("--cron", cron_expr, "timer cron expression");
  dep->add_option("--unit", unit_id, "timer unit id");
  dep->add_option("--routes", routes_csv,
                  "comma list: score_column,flowsheet,inbasket,alert");
  dep->add_option("--p", randomization_p, "suppress-arm probability");
  dep->add_option("--rng-seed", rng_seed, "randomization seed");

  auto* sim =
      app.add_subcommand("run-sim", "drive the live trial on a virtual clock");
  add_common(sim);
  sim->add_option("--duration", duration, "virtual duration, e.g. 30d");
  sim->add_option("--rate", rate, "sim-window encounter rate multiplier");
  sim->add_option("--mode", mode, "override deployment mode: silent|loud");
  sim->add_option("--drift-at", drift_at, "inject drift at offset, e.g. 15d");
  sim->add_option("--covariate-shift", covariate_shift, "severity mean delta");
  sim->add_option("--concept-shift", concept_shift, "coupling scale");
  sim->add_flag("--wall", wall, "pace against the wall clock");
  sim->add_option("--time-scale", time_scale, "virtual seconds per wall second");

  auto* ext = app.add_subcommand("extract-labels", "pair packets with results");
  add_common(ext);
  ext->add_option("--maturation", maturation, "label maturation, e.g. 2h");

  auto* rep = app.add_subcommand("report", "emit metrics.json and report.html");
  add_common(rep);

  auto* par = app.add_subcommand("parity-check",
                                 "warehouse vs transactional feature parity");
  add_common(par);
  par->add_option("--n", parity_n, "number of (patient, time) pairs");
  par->add_option("--patients", parity_patients, "world size override");

  auto* demo = app.add_subcommand("demo", "one-shot end-to-end silent trial");
  add_common(demo);
  demo->add_option("--duration", duration, "virtual duration");
  demo->add_option("--rate", rate, "sim-window rate multiplier");
  demo->add_option("--mode", mode, "silent|loud");
  demo->add_option("--drift-at", drift_at, "inject drift at offset");
  demo->add_option("--covariate-shift", covariate_shift, "severity mean delta");
  demo->add_option("--concept-shift", concept_shift, "coupling scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n" << app.help() << std::flush;
    return 2;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    fs::create_directories(common.out_dir);
    if (gen->parsed()) stage_gen_world(common);
    if (exp->parsed()) stage_export_warehouse(common, up_to);
    if (coh->parsed()) stage_build_cohort(common);
    if (trn->parsed()) stage_train(common);
    if (dep->parsed()) {
      stage_deploy(common, mode, trigger_kind, cron_expr, unit_id, routes_csv,
                   randomization_p, rng_seed);
    }
    if (sim->parsed()) {
      stage_run_sim(common, duration, rate, mode, drift_at, covariate_shift,
                    concept_shift, wall, time_scale);
    }
    if (ext->parsed()) stage_extract_labels(common, maturation);
    if (rep->parsed()) stage_report(common);
    if (par->parsed()) {
      return stage_parity_check(common, parity_n, parity_patients);
    }
    if (demo->parsed()) {
      stage_demo(common, duration, rate, mode, drift_at, covariate_shift,
                 concept_shift);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: stage=%s: %s\n", stage.c_str(), e.what());
    return 1;
  }
  return 0;
}

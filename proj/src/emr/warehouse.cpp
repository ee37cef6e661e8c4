#include "clinloop/emr/warehouse.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include "clinloop/numfmt.hpp"

namespace clinloop::emr {

namespace {

void open_out(std::ofstream& f, const std::filesystem::path& p) {
  f.open(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

void export_warehouse(const World& world, Timestamp up_to,
                      const std::filesystem::path& dest) {
  std::error_code ec;
  std::filesystem::create_directories(dest, ec);

  std::ofstream patients, events, orders, results;
  open_out(patients, dest / "patients.tsv");
  open_out(events, dest / "events.tsv");
  open_out(orders, dest / "orders.tsv");
  open_out(results, dest / "results.tsv");

  patients << "patient_id\tbirth_date\tsex\trace\tunit_id\n";
  events << "patient_id\tkind\tcode\tnumeric_value\tabnormal\teffective_time\n";
  orders << "order_id\tpatient_id\tpanel_code\torder_time\n";
  results << "order_id\tcomponent_code\tvalue\tref_low\tref_high\tabnormal\t"
             "result_time\n";

  std::string buf;
  for (const std::string& pid : world.patient_ids()) {
    const PatientRecord rec = *world.patient(pid);
    patients << rec.patient_id << '\t' << format_date(rec.birth_date) << '\t'
             << to_string(rec.sex) << '\t' << to_string(rec.race) << '\t'
             << rec.unit_id << '\n';

    // Merge the three per-patient streams into one time-ordered table.
    struct Row {
      Timestamp t;
      int kind;
      std::string line;
    };
    std::vector<Row> rows;
    for (const auto& c : world.conditions(pid, up_to)) {
      rows.push_back({c.effective_time, 0,
                      pid + "\tCondition\t" + c.code + "\t\t\t" +
                          format_rfc3339(c.effective_time)});
    }
    for (const auto& m :
         world.medications(pid, std::numeric_limits<Timestamp>::min(), up_to)) {
      rows.push_back({m.effective_time, 1,
                      pid + "\tMedication\t" + m.code + "\t\t\t" +
                          format_rfc3339(m.effective_time)});
    }
    for (const auto& o :
         world.observations(pid, std::numeric_limits<Timestamp>::min(), up_to)) {
      rows.push_back({o.effective_time, 2,
                      pid + "\tLabResult\t" + o.component_code + "\t" +
                          fmt_double(o.value) + "\t" +
                          (o.abnormal ? "true" : "false") + "\t" +
                          format_rfc3339(o.effective_time)});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      if (a.t != b.t) return a.t < b.t;
      if (a.kind != b.kind) return a.kind < b.kind;
      return a.line < b.line;
    });
    for (const auto& r : rows) events << r.line << '\n';
  }

  for (const auto& o : world.orders_snapshot()) {
    if (o.order_time > up_to) continue;
    orders << o.order_id << '\t' << o.patient_id << '\t'
           << to_string(o.panel_code) << '\t' << format_rfc3339(o.order_time)
           << '\n';
    for (const auto& comp : o.component_codes) {
      const auto res = world.observation_for_order(o.order_id, comp, up_to);
      if (!res) continue;
      const auto& cm = world.component_models().at(comp);
      results << o.order_id << '\t' << comp << '\t' << fmt_double(res->value)
              << '\t' << fmt_double(cm.ref_low) << '\t' << fmt_double(cm.ref_high)
              << '\t' << (res->abnormal ? "true" : "false") << '\t'
              << format_rfc3339(res->effective_time) << '\n';
    }
  }

  for (auto* f : {&patients, &events, &orders, &results}) {
    f->flush();
    if (!*f) throw IoError("write failed under '" + dest.string() + "'");
  }
}

WarehouseData WarehouseData::load(const std::filesystem::path& dir) {
  WarehouseData out;
  auto open_in = [](std::ifstream& f, const std::filesystem::path& p) {
    f.open(p, std::ios::binary);
    if (!f) throw IoError("cannot read '" + p.string() + "'");
  };

  std::string line;
  {
    std::ifstream f;
    open_in(f, dir / "patients.tsv");
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto c = split_tabs(line);
      if (c.size() != 5) throw IoError("bad patients row: '" + line + "'");
      PatientRecord r;
      r.patient_id = c[0];
      r.birth_date = parse_date(c[1]);
      r.sex = sex_from_string(c[2]);
      r.race = race_from_string(c[3]);
      r.unit_id = c[4];
      out.patient_index_[r.patient_id] = static_cast<int>(out.patients_.size());
      out.patients_.push_back(std::move(r));
    }
  }
  {
    std::ifstream f;
    open_in(f, dir / "events.tsv");
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto c = split_tabs(line);
      if (c.size() != 6) throw IoError("bad events row: '" + line + "'");
      ClinicalEvent e;
      e.patient_id = c[0];
      e.kind = event_kind_from_string(c[1]);
      e.code = c[2];
      if (!c[3].empty()) e.numeric_value = parse_double(c[3]);
      if (!c[4].empty()) e.abnormal = (c[4] == "true");
      e.effective_time = parse_rfc3339(c[5]);
      out.events_by_patient_[e.patient_id].push_back(std::move(e));
      ++out.n_events_;
    }
    for (auto& [pid, evs] : out.events_by_patient_) {
      std::sort(evs.begin(), evs.end(),
                [](const ClinicalEvent& a, const ClinicalEvent& b) {
                  if (a.effective_time != b.effective_time)
                    return a.effective_time < b.effective_time;
                  if (a.kind != b.kind) return a.kind < b.kind;
                  return a.code < b.code;
                });
    }
  }
  {
    std::ifstream f;
    open_in(f, dir / "orders.tsv");
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto c = split_tabs(line);
      if (c.size() != 4) throw IoError("bad orders row: '" + line + "'");
      DiagnosticOrder o;
      o.order_id = c[0];
      o.patient_id = c[1];
      o.panel_code = panel_from_string(c[2]);
      o.component_codes = panel_components(o.panel_code);
      o.order_time = parse_rfc3339(c[3]);
      out.orders_.push_back(std::move(o));
    }
  }
  {
    std::ifstream f;
    open_in(f, dir / "results.tsv");
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto c = split_tabs(line);
      if (c.size() != 7) throw IoError("bad results row: '" + line + "'");
      LabResult r;
      r.order_id = c[0];
      r.component_code = c[1];
      r.value = parse_double(c[2]);
      r.ref_low = parse_double(c[3]);
      r.ref_high = parse_double(c[4]);
      r.abnormal = (c[5] == "true");
      r.result_time = parse_rfc3339(c[6]);
      out.result_index_[r.order_id][r.component_code] =
          static_cast<int>(out.results_.size());
      out.results_.push_back(std::move(r));
    }
  }
  return out;
}

const PatientRecord* WarehouseData::find_patient(
    const std::string& patient_id) const {
  auto it = patient_index_.find(patient_id);
  return it == patient_index_.end() ? nullptr : &patients_[it->second];
}

const std::vector<ClinicalEvent>& WarehouseData::events_for(
    const std::string& patient_id) const {
  static const std::vector<ClinicalEvent> kEmpty;
  auto it = events_by_patient_.find(patient_id);
  return it == events_by_patient_.end() ? kEmpty : it->second;
}

const LabResult* WarehouseData::find_result(const std::string& order_id,
                                            const std::string& component) const {
  auto it = result_index_.find(order_id);
  if (it == result_index_.end()) return nullptr;
  auto jt = it->second.find(component);
  return jt == it->second.end() ? nullptr : &results_[jt->second];
}

}  // namespace clinloop::emr

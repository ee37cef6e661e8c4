#include "clinloop/emr/world.hpp"

#include <algorithm>
#include <cmath>

namespace clinloop::emr {

std::string to_string(WritebackTarget t) {
  switch (t) {
    case WritebackTarget::ScoreColumn: return "score";
    case WritebackTarget::Flowsheet: return "flowsheet";
    case WritebackTarget::Inbasket: return "inbasket";
  }
  return "score";
}

World::World(WorldConfig config) : config_(std::move(config)) {
  config_.validate();
}

int World::patient_index(const std::string& patient_id) const {
  auto it = patient_index_.find(patient_id);
  return it == patient_index_.end() ? -1 : it->second;
}

std::optional<PatientRecord> World::patient(const std::string& patient_id) const {
  std::shared_lock lock(mu_);
  const int idx = patient_index(patient_id);
  if (idx < 0) return std::nullopt;
  return patients_[idx].record;
}

std::vector<CodeAt> World::conditions(const std::string& patient_id,
                                      Timestamp now) const {
  std::shared_lock lock(mu_);
  const int idx = patient_index(patient_id);
  if (idx < 0) throw NotFoundError("patient '" + patient_id + "'");
  std::vector<CodeAt> out;
  for (const auto& c : patients_[idx].conditions) {
    if (c.effective_time <= now) out.push_back(c);
  }
  return out;
}

std::vector<CodeAt> World::medications(const std::string& patient_id,
                                       Timestamp since, Timestamp now) const {
  std::shared_lock lock(mu_);
  const int idx = patient_index(patient_id);
  if (idx < 0) throw NotFoundError("patient '" + patient_id + "'");
  std::vector<CodeAt> out;
  for (const auto& m : patients_[idx].medications) {
    if (m.effective_time >= since && m.effective_time <= now) out.push_back(m);
  }
  return out;
}

std::vector<LabObservation> World::observations(const std::string& patient_id,
                                                Timestamp since,
                                                Timestamp now) const {
  std::shared_lock lock(mu_);
  const int idx = patient_index(patient_id);
  if (idx < 0) throw NotFoundError("patient '" + patient_id + "'");
  std::vector<LabObservation> out;
  for (const auto& o : patients_[idx].labs) {
    if (o.effective_time >= since && o.effective_time <= now) out.push_back(o);
  }
  return out;
}

std::optional<LabObservation> World::observation_for_order(
    const std::string& order_id, const std::string& component,
    Timestamp now) const {
  std::shared_lock lock(mu_);
  auto it = order_index_.find(order_id);
  if (it == order_index_.end()) return std::nullopt;
  for (const auto& r : order_results_[it->second]) {
    if (r.component_code == component && r.result_time <= now) {
      return LabObservation{r.order_id, r.component_code, r.value, r.abnormal,
                            r.result_time};
    }
  }
  return std::nullopt;
}

std::vector<std::string> World::unit_roster(const std::string& unit_id) const {
  std::shared_lock lock(mu_);
  auto it = units_.find(unit_id);
  if (it == units_.end()) throw NotFoundError("unit '" + unit_id + "'");
  return it->second;
}

std::vector<std::string> World::unit_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, roster] : units_) out.push_back(id);
  return out;
}

bool World::has_patient(const std::string& patient_id) const {
  std::shared_lock lock(mu_);
  return patient_index(patient_id) >= 0;
}

std::vector<std::string> World::patient_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  out.reserve(patients_.size());
  for (const auto& p : patients_) out.push_back(p.record.patient_id);
  return out;
}

std::size_t World::n_orders() const {
  std::shared_lock lock(mu_);
  return orders_.size();
}

std::vector<DiagnosticOrder> World::orders_snapshot() const {
  std::shared_lock lock(mu_);
  return orders_;
}

LabResult World::make_result_locked(const PatientData& p,
                                    const std::string& order_id,
                                    const std::string& component,
                                    Timestamp order_time) const {
  const ComponentModel& cm = components_.at(component);
  const auto& cfg = config_;

  // Patient-level component offset: a personal baseline that prior results
  // of the same component reveal. Scales with signal_strength so that a
  // zero-signal world has labels independent of every feature.
  constexpr double kEtaSd = 1.2;
  const double z = p.severity;
  const double eta =
      Rng::keyed(cfg.seed, "eta", p.record.patient_id, component).normal() *
      kEtaSd;
  const double noise =
      Rng::keyed(cfg.seed, "labnoise", order_id, component).normal();

  // Drift decomposition:
  //  - covariate_shift moves the population value mean (at the world's base
  //    coupling), i.e. P(x) shifts;
  //  - concept_shift scales the predictable component and renormalizes the
  //    fresh noise so the marginal value distribution is unchanged: only
  //    P(y|x) rotates;
  //  - prevalence_shift adds a per-component mean delta, the local
  //    linearization of +delta abnormal log-odds.
  double concept_scale = 1.0;
  double noise_scale = 1.0;
  double mean_shift = 0.0;
  if (cfg.drift && order_time >= cfg.drift->start_time) {
    concept_scale = cfg.drift->concept_shift;
    const double s = cfg.signal_strength;
    const double predictable_var = s * s * (cm.beta * cm.beta + kEtaSd * kEtaSd);
    noise_scale = std::sqrt(
        std::max(0.0, (1.0 - concept_scale * concept_scale) * predictable_var) +
        1.0);
    mean_shift += cm.beta * cfg.drift->covariate_shift;
    auto it = cfg.drift->prevalence_shift.find(component);
    if (it != cfg.drift->prevalence_shift.end()) {
      mean_shift += it->second * 0.6;
    }
  }

  double value =
      cm.mu +
      cm.sigma * (cfg.signal_strength *
                      (concept_scale * (cm.beta * z + eta) + mean_shift) +
                  noise_scale * noise);
  value = std::round(value * 100.0) / 100.0;

  LabResult r;
  r.order_id = order_id;
  r.component_code = component;
  r.value = value;
  r.ref_low = cm.ref_low;
  r.ref_high = cm.ref_high;
  r.abnormal = value < cm.ref_low || value > cm.ref_high;
  r.result_time = order_time + cfg.result_delay;
  return r;
}

DiagnosticOrder World::sign_order(const std::string& patient_id,
                                  PanelCode panel, Timestamp time,
                                  WebhookPoster* poster) {
  DiagnosticOrder order;
  std::vector<Subscription> matching;
  {
    std::unique_lock lock(mu_);
    const int idx = patient_index(patient_id);
    if (idx < 0) throw NotFoundError("patient '" + patient_id + "'");

    order.order_id = "O" + std::to_string(next_order_seq_++);
    order.patient_id = patient_id;
    order.panel_code = panel;
    order.component_codes = panel_components(panel);
    order.order_time = time;

    order_index_[order.order_id] = static_cast<int>(orders_.size());
    orders_.push_back(order);

    auto& p = patients_[idx];
    std::vector<LabResult> results;
    for (const auto& comp : order.component_codes) {
      LabResult r = make_result_locked(p, order.order_id, comp, time);
      p.labs.push_back(LabObservation{r.order_id, r.component_code, r.value,
                                      r.abnormal, r.result_time});
      results.push_back(std::move(r));
    }
    // Keep the per-patient stream sorted; scheduled results mature later but
    // live in time order.
    std::sort(p.labs.begin(), p.labs.end(),
              [](const LabObservation& a, const LabObservation& b) {
                if (a.effective_time != b.effective_time)
                  return a.effective_time < b.effective_time;
                if (a.order_id != b.order_id) return a.order_id < b.order_id;
                return a.component_code < b.component_code;
              });
    order_results_.push_back(std::move(results));

    for (const auto& s : subscriptions_) {
      if (s.panel == panel) matching.push_back(s);
    }
    callbacks_dispatched_ += matching.size();
  }

  // Callbacks run outside the writer lock: the receiver's pipeline reads
  // back into this world over HTTP and must not deadlock against us.
  if (poster != nullptr && !matching.empty()) {
    nlohmann::json payload = {{"patient_id", patient_id},
                              {"order_id", order.order_id},
                              {"panel_code", to_string(panel)},
                              {"order_time", format_rfc3339(time)}};
    for (const auto& s : matching) {
      WebhookPoster::Result res = poster->post(s.url, payload);
      std::unique_lock lock(mu_);
      if (!res.ok) {
        callback_failures_.push_back({s.url, order.order_id, res.error});
      } else if (res.body.rfind("<alert", 0) == 0) {
        alert_log_.push_back({order.order_id, res.body, time});
      }
    }
  }
  return order;
}

int World::add_subscription(PanelCode panel, const std::string& callback_url) {
  std::unique_lock lock(mu_);
  subscriptions_.push_back({next_subscription_id_, panel, callback_url});
  return next_subscription_id_++;
}

void World::apply_writeback(WritebackTarget target,
                            const nlohmann::json& payload, Timestamp now) {
  std::unique_lock lock(mu_);
  const std::string pid = payload.value("patient_id", "");
  if (patient_index(pid) < 0) throw NotFoundError("patient '" + pid + "'");
  WritebackEntry entry{payload, now};
  switch (target) {
    case WritebackTarget::ScoreColumn: score_log_.push_back(entry); break;
    case WritebackTarget::Flowsheet: flowsheet_log_.push_back(entry); break;
    case WritebackTarget::Inbasket: inbasket_log_.push_back(entry); break;
  }
}

std::vector<WritebackEntry> World::writeback_log(WritebackTarget target) const {
  std::shared_lock lock(mu_);
  switch (target) {
    case WritebackTarget::ScoreColumn: return score_log_;
    case WritebackTarget::Flowsheet: return flowsheet_log_;
    case WritebackTarget::Inbasket: return inbasket_log_;
  }
  return {};
}

std::vector<AlertLogEntry> World::alert_log() const {
  std::shared_lock lock(mu_);
  return alert_log_;
}

std::vector<CallbackFailure> World::callback_failures() const {
  std::shared_lock lock(mu_);
  return callback_failures_;
}

std::size_t World::callbacks_dispatched() const {
  std::shared_lock lock(mu_);
  return callbacks_dispatched_;
}

}  // namespace clinloop::emr

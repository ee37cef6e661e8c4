#include "clinloop/monitor/labels.hpp"

#include <cstdio>

namespace clinloop::monitor {

LabelExtractor::Outcome OrderResultLabelExtractor::run(serve::PacketStore& store,
                                                       emr::EmrClient& emr,
                                                       Duration maturation,
                                                       Timestamp now) {
  Outcome out;
  serve::PacketStore::Filter filter;
  filter.model_id = model_id_;
  const auto read = store.read(filter);

  for (const auto& p : read.packets) {
    if (p.label.has_value()) continue;
    if (p.inference_time + maturation > now) {
      ++out.immature;
      continue;
    }
    if (!p.order_id) {
      ++out.pending;  // timer packets carry no order to resolve against
      continue;
    }
    try {
      const auto obs = emr.observation_for_order(*p.order_id, component_code_);
      if (!obs) {
        ++out.pending;
        continue;
      }
      const emr::PatientRecord rec = emr.patient(p.patient_id);
      serve::LabelUpdate u;
      u.packet_id = p.packet_id;
      u.label = obs->abnormal;
      u.label_time = obs->effective_time;
      u.sex = rec.sex;
      u.race = rec.race;
      u.age_over_40 = age_years(rec.birth_date, p.inference_time) > 40.0;
      store.append_label_update(u);
      ++out.labeled;
    } catch (const SourceUnavailableError& e) {
      // Transport is down; keep what we have and stop burning requests.
      ++out.errors;
      std::fprintf(stderr, "[labels] EMR unavailable: %s\n", e.what());
      break;
    } catch (const std::exception& e) {
      ++out.errors;
      std::fprintf(stderr, "[labels] %s\n", e.what());
    }
  }
  return out;
}

}  // namespace clinloop::monitor

#include "clinloop/monitor/drift.hpp"

#include <cmath>
#include <map>

#include "clinloop/errors.hpp"

namespace clinloop::monitor {

// Packets cluster heavily within patients (an inpatient stay yields many
// inferences in a few days), so all distribution statistics aggregate to
// per-patient means first and treat the patient as the sampling unit;
// packet-level means would overstate the effective sample size severalfold.

namespace {

struct Accumulator {
  explicit Accumulator(std::size_t n_features)
      : feature_sum(n_features, 0.0), feature_sq(n_features, 0.0) {}

  std::vector<double> feature_sum;
  std::vector<double> feature_sq;
  double pred_sum = 0.0;
  double pred_sq = 0.0;
  double label_sum = 0.0;
  double label_sq = 0.0;
  std::size_t n = 0;
  std::size_t n_label = 0;

  void add_patient(const std::vector<double>& features, double prediction,
                   std::optional<double> label) {
    for (std::size_t i = 0; i < feature_sum.size(); ++i) {
      feature_sum[i] += features[i];
      feature_sq[i] += features[i] * features[i];
    }
    pred_sum += prediction;
    pred_sq += prediction * prediction;
    if (label) {
      label_sum += *label;
      label_sq += *label * *label;
      ++n_label;
    }
    ++n;
  }
};

double sample_var(double sum, double sq_sum, std::size_t n) {
  if (n < 2) return 0.0;
  const double mean = sum / n;
  const double v = (sq_sum - n * mean * mean) / static_cast<double>(n - 1);
  return v < 0.0 ? 0.0 : v;
}

}  // namespace

DriftBaseline build_baseline(const std::vector<features::FeatureVector>& vectors,
                             const std::vector<double>& scores,
                             const std::vector<bool>& labels,
                             const std::vector<std::string>& patient_ids,
                             std::size_t n_features) {
  if (vectors.size() != scores.size() || vectors.size() != labels.size() ||
      vectors.size() != patient_ids.size()) {
    throw ValidationError("baseline inputs must align");
  }
  // Group rows by patient, average within, then accumulate across patients.
  struct PerPatient {
    std::vector<double> features;
    double pred = 0.0;
    double label = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, PerPatient> by_patient;
  for (std::size_t r = 0; r < vectors.size(); ++r) {
    auto& p = by_patient[patient_ids[r]];
    if (p.features.empty()) p.features.assign(n_features, 0.0);
    for (const auto& [idx, c] : vectors[r].entries) {
      if (idx < 0 || idx >= static_cast<int>(n_features)) {
        throw ValidationError("baseline feature index out of range");
      }
      p.features[idx] += c;
    }
    p.pred += scores[r];
    p.label += labels[r] ? 1.0 : 0.0;
    ++p.n;
  }

  Accumulator acc(n_features);
  std::vector<double> mean(n_features);
  for (auto& [pid, p] : by_patient) {
    for (std::size_t i = 0; i < n_features; ++i) {
      mean[i] = p.features[i] / static_cast<double>(p.n);
    }
    acc.add_patient(mean, p.pred / p.n, p.label / p.n);
  }

  DriftBaseline b;
  b.n = acc.n;
  b.feature_mean.assign(n_features, 0.0);
  b.feature_var.assign(n_features, 0.0);
  if (acc.n > 0) {
    for (std::size_t i = 0; i < n_features; ++i) {
      b.feature_mean[i] = acc.feature_sum[i] / acc.n;
      b.feature_var[i] = sample_var(acc.feature_sum[i], acc.feature_sq[i], acc.n);
    }
    b.prediction_mean = acc.pred_sum / acc.n;
    b.prediction_var = sample_var(acc.pred_sum, acc.pred_sq, acc.n);
    b.label_mean = acc.label_sum / acc.n;
    b.label_var = sample_var(acc.label_sum, acc.label_sq, acc.n);
  }
  return b;
}

DriftSnapshot drift_snapshot(const std::vector<serve::InferencePacket>& packets,
                             const std::string& model_id, Timestamp window_start,
                             Timestamp window_end, std::size_t n_features) {
  struct PerPatient {
    std::vector<double> features;
    double pred = 0.0;
    std::size_t n = 0;
    double label = 0.0;
    std::size_t n_label = 0;
  };
  std::map<std::string, PerPatient> by_patient;
  std::size_t n_packets = 0;
  for (const auto& p : packets) {
    if (p.model_id != model_id) continue;
    if (p.inference_time < window_start || p.inference_time >= window_end)
      continue;
    ++n_packets;
    auto& agg = by_patient[p.patient_id];
    if (agg.features.empty()) agg.features.assign(n_features, 0.0);
    for (const auto& [idx, c] : p.features.entries) {
      if (idx >= 0 && idx < static_cast<int>(n_features)) {
        agg.features[idx] += c;
      }
    }
    agg.pred += p.score;
    ++agg.n;
    if (p.label.has_value()) {
      agg.label += *p.label ? 1.0 : 0.0;
      ++agg.n_label;
    }
  }

  DriftSnapshot s;
  s.model_id = model_id;
  s.window_start = window_start;
  s.window_end = window_end;
  s.n = n_packets;
  s.feature_mean.assign(n_features, 0.0);
  double pred_sum = 0.0;
  double label_sum = 0.0;
  for (const auto& [pid, agg] : by_patient) {
    for (std::size_t i = 0; i < n_features; ++i) {
      s.feature_mean[i] += agg.features[i] / static_cast<double>(agg.n);
    }
    pred_sum += agg.pred / static_cast<double>(agg.n);
    if (agg.n_label > 0) {
      label_sum += agg.label / static_cast<double>(agg.n_label);
      ++s.n_labeled_patients;
    }
  }
  s.n_patients = by_patient.size();
  if (s.n_patients > 0) {
    for (auto& m : s.feature_mean) m /= static_cast<double>(s.n_patients);
    s.prediction_mean = pred_sum / static_cast<double>(s.n_patients);
  }
  if (s.n_labeled_patients > 0) {
    s.label_mean = label_sum / static_cast<double>(s.n_labeled_patients);
  }
  return s;
}

std::vector<DriftFlag> drift_flag(const DriftSnapshot& snapshot,
                                  const DriftBaseline& baseline,
                                  const features::Vocabulary& vocab,
                                  const DriftFlagOptions& options) {
  std::vector<DriftFlag> flags;
  if (snapshot.n_patients == 0 || baseline.n == 0) return flags;

  const double nw = static_cast<double>(snapshot.n_patients);
  const double nb = static_cast<double>(baseline.n);
  const double var_floor = 1.0 / nb;

  auto z_for = [&](double mean_w, double mean_b, double var_b, double n_w_q) {
    const double se =
        std::sqrt(std::max(var_b, var_floor) * (1.0 / n_w_q + 1.0 / nb));
    return std::abs(mean_w - mean_b) / se;
  };

  for (std::size_t i = 0; i < baseline.feature_mean.size() &&
                          i < snapshot.feature_mean.size();
       ++i) {
    const double occurrences = baseline.feature_mean[i] * nb;
    if (occurrences < options.min_baseline_occurrences) continue;
    const double z = z_for(snapshot.feature_mean[i], baseline.feature_mean[i],
                           baseline.feature_var[i], nw);
    if (z > options.k) {
      flags.push_back({"feature:" + vocab.token_at(static_cast<int>(i)), z});
    }
  }

  {
    const double z = z_for(snapshot.prediction_mean, baseline.prediction_mean,
                           baseline.prediction_var, nw);
    if (z > options.k) flags.push_back({"prediction_mean", z});
  }
  if (snapshot.n_labeled_patients > 0) {
    const double z = z_for(snapshot.label_mean, baseline.label_mean,
                           baseline.label_var,
                           static_cast<double>(snapshot.n_labeled_patients));
    if (z > options.k) flags.push_back({"label_mean", z});
  }
  return flags;
}

nlohmann::json DriftBaseline::to_json() const {
  return {{"n", n},
          {"feature_mean", feature_mean},
          {"feature_var", feature_var},
          {"prediction_mean", prediction_mean},
          {"prediction_var", prediction_var},
          {"label_mean", label_mean},
          {"label_var", label_var}};
}

DriftBaseline DriftBaseline::from_json(const nlohmann::json& j) {
  DriftBaseline b;
  b.n = j.at("n").get<std::size_t>();
  b.feature_mean = j.at("feature_mean").get<std::vector<double>>();
  b.feature_var = j.at("feature_var").get<std::vector<double>>();
  b.prediction_mean = j.at("prediction_mean").get<double>();
  b.prediction_var = j.at("prediction_var").get<double>();
  b.label_mean = j.at("label_mean").get<double>();
  b.label_var = j.at("label_var").get<double>();
  return b;
}

}  // namespace clinloop::monitor

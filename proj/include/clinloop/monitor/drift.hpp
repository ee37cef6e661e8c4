#pragma once

#include <string>
#include <vector>

#include "clinloop/features/featurize.hpp"
#include "clinloop/serve/packet.hpp"

#include "json.hpp"

namespace clinloop::monitor {

// Reference distribution statistics, normally built from the retrospective
// test set. Rows are aggregated per patient before averaging — inferences
// cluster inside hospital stays, and the patient is the sampling unit the
// standard errors assume. `n` counts distinct patients.
struct DriftBaseline {
  std::size_t n = 0;                 // distinct patients
  std::vector<double> feature_mean;  // dense over vocabulary indices
  std::vector<double> feature_var;   // sample variance across patients
  double prediction_mean = 0.0;
  double prediction_var = 0.0;
  double label_mean = 0.0;
  double label_var = 0.0;

  nlohmann::json to_json() const;
  static DriftBaseline from_json(const nlohmann::json& j);
};

DriftBaseline build_baseline(const std::vector<features::FeatureVector>& vectors,
                             const std::vector<double>& scores,
                             const std::vector<bool>& labels,
                             const std::vector<std::string>& patient_ids,
                             std::size_t n_features);

struct DriftSnapshot {
  std::string model_id;
  Timestamp window_start = 0;
  Timestamp window_end = 0;
  std::size_t n = 0;                   // packets in the window
  std::size_t n_patients = 0;          // denominator for the means
  std::size_t n_labeled_patients = 0;  // denominator for label_mean
  std::vector<double> feature_mean;    // per-patient means, averaged
  double prediction_mean = 0.0;
  double label_mean = 0.0;
};

// Window statistics over stored packets, aggregated per patient exactly like
// the baseline (absent features count 0; label mean over patients holding at
// least one labeled packet).
DriftSnapshot drift_snapshot(const std::vector<serve::InferencePacket>& packets,
                             const std::string& model_id, Timestamp window_start,
                             Timestamp window_end, std::size_t n_features);

struct DriftFlag {
  std::string quantity;  // "feature:<token>", "prediction_mean", "label_mean"
  double z = 0.0;
};

struct DriftFlagOptions {
  double k = 4.0;
  // Features with fewer baseline occurrences are reported but never flagged:
  // their count means are too heavy-tailed for a normal-theory threshold.
  double min_baseline_occurrences = 10.0;
};

// Flags |mean_w - mean_base| / se > k with the two-sample standard error
// se = sqrt(max(var_base, 1/n_base) * (1/n_w + 1/n_base)).
std::vector<DriftFlag> drift_flag(const DriftSnapshot& snapshot,
                                  const DriftBaseline& baseline,
                                  const features::Vocabulary& vocab,
                                  const DriftFlagOptions& options = {});

}  // namespace clinloop::monitor

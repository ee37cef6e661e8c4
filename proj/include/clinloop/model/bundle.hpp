#pragma once

#include <filesystem>
#include <string>

#include "clinloop/features/featurize.hpp"
#include "clinloop/features/vocabulary.hpp"
#include "clinloop/model/forest.hpp"

namespace clinloop::model {

struct ThresholdChoice {
  double value = 0.5;
  bool degenerate = false;  // fell back to 0.5
};

// Youden's J (sensitivity + specificity - 1) maximized over midpoints of
// adjacent distinct score values; ties break toward higher specificity.
ThresholdChoice select_threshold(const std::vector<double>& scores,
                                 const std::vector<bool>& labels);

// One deployable unit: classifier + vocabulary + operating point + task
// metadata. Round-trips byte-identically through its JSON file format.
struct ModelBundle {
  std::string model_id;
  emr::PanelCode panel_code = emr::PanelCode::CBC;
  std::string component_code;
  features::Vocabulary vocabulary;
  Forest forest;
  double decision_threshold = 0.5;
  Timestamp created_at = 0;
  std::uint64_t training_fingerprint = 0;

  // Scores a vector built with this bundle's vocabulary; a fingerprint
  // mismatch is a hard failure, never a silent rescore.
  double predict(const features::FeatureVector& x) const;

  void validate() const;  // throws IntegrityError naming the failed check

  nlohmann::json to_json() const;
  static ModelBundle from_json(const nlohmann::json& j);
};

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace clinloop::model

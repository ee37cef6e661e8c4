#include "clinloop/model/bundle.hpp"

#include <algorithm>
#include <fstream>

#include "clinloop/fnv.hpp"

namespace clinloop::model {

ThresholdChoice select_threshold(const std::vector<double>& scores,
                                 const std::vector<bool>& labels) {
  const std::size_t n = scores.size();
  if (n != labels.size() || n == 0) {
    throw ValidationError("scores/labels size mismatch or empty");
  }
  std::size_t n_pos = 0;
  for (bool l : labels) n_pos += l ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return {0.5, true};

  std::vector<double> unique_scores = scores;
  std::sort(unique_scores.begin(), unique_scores.end());
  unique_scores.erase(
      std::unique(unique_scores.begin(), unique_scores.end()),
      unique_scores.end());
  if (unique_scores.size() < 2) return {0.5, true};

  // Candidate cuts: midpoints between adjacent distinct scores, plus the
  // below-min and above-max operating points when they exist inside (0,1).
  std::vector<double> cuts;
  if (unique_scores.front() > 0.0) cuts.push_back(unique_scores.front() / 2.0);
  for (std::size_t i = 0; i + 1 < unique_scores.size(); ++i) {
    cuts.push_back((unique_scores[i] + unique_scores[i + 1]) / 2.0);
  }
  if (unique_scores.back() < 1.0) {
    cuts.push_back((unique_scores.back() + 1.0) / 2.0);
  }

  double best_j = -2.0;
  double best_spec = -1.0;
  double best_cut = 0.5;
  for (const double cut : cuts) {
    std::size_t tp = 0;
    std::size_t tn = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (scores[k] >= cut) {
        tp += labels[k] ? 1 : 0;
      } else {
        tn += labels[k] ? 0 : 1;
      }
    }
    const double sens = static_cast<double>(tp) / n_pos;
    const double spec = static_cast<double>(tn) / n_neg;
    const double j = sens + spec - 1.0;
    // Ties on J (up to rounding) break toward higher specificity.
    if (j > best_j + 1e-12 || (j > best_j - 1e-12 && spec > best_spec)) {
      best_j = std::max(j, best_j);
      best_spec = spec;
      best_cut = cut;
    }
  }
  return {best_cut, false};
}

double ModelBundle::predict(const features::FeatureVector& x) const {
  if (x.vocab_fingerprint != vocabulary.fingerprint()) {
    throw VocabularyMismatchError(
        "feature vector was built with a different vocabulary");
  }
  return forest.predict(x.entries);
}

void ModelBundle::validate() const {
  if (forest.n_features() != static_cast<int>(vocabulary.size())) {
    throw IntegrityError("bundle check failed: forest n_features (" +
                         std::to_string(forest.n_features()) +
                         ") != vocabulary size (" +
                         std::to_string(vocabulary.size()) + ")");
  }
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
    throw IntegrityError("bundle check failed: decision_threshold not in (0,1)");
  }
  for (const auto& t : forest.trees()) {
    for (const auto& nd : t.nodes) {
      if (nd.feature >= forest.n_features()) {
        throw IntegrityError("bundle check failed: node feature out of range");
      }
      if (nd.feature < 0 && (nd.leaf_value < 0.0 || nd.leaf_value > 1.0)) {
        throw IntegrityError("bundle check failed: leaf fraction outside [0,1]");
      }
    }
  }
}

namespace {

nlohmann::json envelope_without_fingerprint(const ModelBundle& b) {
  return {{"format_version", 1},
          {"model_id", b.model_id},
          {"panel_code", emr::to_string(b.panel_code)},
          {"component_code", b.component_code},
          {"vocabulary", b.vocabulary.to_json()},
          {"forest", b.forest.to_json()},
          {"decision_threshold", b.decision_threshold},
          {"created_at", format_rfc3339(b.created_at)},
          {"training_fingerprint", b.training_fingerprint}};
}

}  // namespace

nlohmann::json ModelBundle::to_json() const {
  nlohmann::json j = envelope_without_fingerprint(*this);
  j["bundle_fingerprint"] = fnv1a64(j.dump());
  return j;
}

ModelBundle ModelBundle::from_json(const nlohmann::json& j) {
  ModelBundle b;
  try {
    b.model_id = j.at("model_id").get<std::string>();
    b.panel_code = emr::panel_from_string(j.at("panel_code").get<std::string>());
    b.component_code = j.at("component_code").get<std::string>();
    b.vocabulary = features::Vocabulary::from_json(j.at("vocabulary"));
    b.forest = Forest::from_json(j.at("forest"));
    b.decision_threshold = j.at("decision_threshold").get<double>();
    b.created_at = parse_rfc3339(j.at("created_at").get<std::string>());
    b.training_fingerprint = j.at("training_fingerprint").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("bundle check failed: malformed envelope (") +
                         e.what() + ")");
  }
  const auto expected = envelope_without_fingerprint(b);
  if (!j.contains("bundle_fingerprint") ||
      j.at("bundle_fingerprint").get<std::uint64_t>() !=
          fnv1a64(expected.dump())) {
    throw IntegrityError("bundle check failed: bundle_fingerprint mismatch");
  }
  b.validate();
  return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << bundle.to_json().dump(2) << '\n';
  f.flush();
  if (!f) throw IoError("write failed: '" + path.string() + "'");
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read '" + path.string() + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("bundle check failed: invalid JSON (") +
                         e.what() + ")");
  }
  return ModelBundle::from_json(j);
}

}  // namespace clinloop::model

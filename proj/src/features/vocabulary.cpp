#include "clinloop/features/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "clinloop/errors.hpp"
#include "clinloop/fnv.hpp"
#include "clinloop/numfmt.hpp"

namespace clinloop::features {

int bin_numeric(double value, const std::array<double, 4>& edges) {
  int bin = 0;
  for (double e : edges) {
    if (value > e) ++bin;
  }
  return bin;
}

std::array<double, 4> quintile_edges(std::vector<double> values) {
  if (values.empty()) throw ValidationError("no values for quantile edges");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::array<double, 4> edges{};
  const double qs[4] = {0.2, 0.4, 0.6, 0.8};
  for (int i = 0; i < 4; ++i) {
    std::size_t k = static_cast<std::size_t>(std::ceil(qs[i] * n - 1e-9));
    if (k < 1) k = 1;
    if (k > n) k = n;
    edges[i] = values[k - 1];
  }
  return edges;
}

Vocabulary::Vocabulary(std::map<std::string, int> token_to_index,
                       std::map<std::string, std::array<double, 4>> edges)
    : token_to_index_(std::move(token_to_index)),
      numeric_bin_edges_(std::move(edges)) {
  finalize();
}

void Vocabulary::finalize() {
  index_to_token_.assign(token_to_index_.size(), {});
  for (const auto& [tok, idx] : token_to_index_) {
    if (idx < 0 || idx >= static_cast<int>(token_to_index_.size()) ||
        !index_to_token_[idx].empty()) {
      throw IntegrityError("vocabulary indices are not dense 0..V-1");
    }
    index_to_token_[idx] = tok;
  }
  // Fingerprint over a canonical rendering: tokens in index order, then
  // edges, then windows. Stable across serialization round trips.
  Fnv64 h;
  for (const auto& tok : index_to_token_) {
    h.update("t\x1f").update(tok).update("\x1e");
  }
  for (const auto& [code, edges] : numeric_bin_edges_) {
    h.update("e\x1f").update(code);
    for (double e : edges) h.update("\x1f").update(fmt_double(e));
    h.update("\x1e");
  }
  h.update("w\x1f")
      .update(std::to_string(kMedicationWindowDays))
      .update("\x1f")
      .update(std::to_string(kLabWindowDays));
  fingerprint_ = h.digest();
}

int Vocabulary::index_of(const std::string& token) const {
  auto it = token_to_index_.find(token);
  return it == token_to_index_.end() ? -1 : it->second;
}

const std::array<double, 4>* Vocabulary::edges_for(
    const std::string& numeric_code) const {
  auto it = numeric_bin_edges_.find(numeric_code);
  return it == numeric_bin_edges_.end() ? nullptr : &it->second;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json tokens = nlohmann::json::object();
  for (const auto& [tok, idx] : token_to_index_) tokens[tok] = idx;
  nlohmann::json edges = nlohmann::json::object();
  for (const auto& [code, e] : numeric_bin_edges_) {
    edges[code] = {e[0], e[1], e[2], e[3]};
  }
  return {{"format_version", 1},
          {"tokens", tokens},
          {"numeric_bin_edges", edges},
          {"windows",
           {{"medication_days", kMedicationWindowDays},
            {"lab_days", kLabWindowDays}}},
          {"fingerprint", fingerprint_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  std::map<std::string, int> tokens;
  for (const auto& [tok, idx] : j.at("tokens").items()) {
    tokens[tok] = idx.get<int>();
  }
  std::map<std::string, std::array<double, 4>> edges;
  for (const auto& [code, e] : j.at("numeric_bin_edges").items()) {
    edges[code] = {e.at(0).get<double>(), e.at(1).get<double>(),
                   e.at(2).get<double>(), e.at(3).get<double>()};
  }
  if (j.at("windows").at("medication_days").get<int>() != kMedicationWindowDays ||
      j.at("windows").at("lab_days").get<int>() != kLabWindowDays) {
    throw IntegrityError("vocabulary windows mismatch");
  }
  Vocabulary v(std::move(tokens), std::move(edges));
  if (j.contains("fingerprint") &&
      j.at("fingerprint").get<std::uint64_t>() != v.fingerprint()) {
    throw IntegrityError("vocabulary fingerprint mismatch");
  }
  return v;
}

Vocabulary build_vocabulary(const std::vector<PatientHistory>& training) {
  if (training.empty()) throw ValidationError("empty training set");

  std::set<std::string> categorical;
  std::map<std::string, std::vector<double>> numeric_values;

  for (const auto& h : training) {
    const Timestamp t = h.inference_time;
    for (const auto& c : h.conditions) {
      if (c.effective_time < t) categorical.insert(c.code);
    }
    for (const auto& m : h.medications) {
      if (m.effective_time < t &&
          t - m.effective_time <= days(kMedicationWindowDays)) {
        categorical.insert(m.code);
      }
    }
    for (const auto& l : h.labs) {
      if (l.effective_time < t && t - l.effective_time <= days(kLabWindowDays)) {
        numeric_values[l.code].push_back(l.numeric_value);
      }
    }
    categorical.insert("sex_" + emr::to_string(h.demographics.sex));
    categorical.insert("race_" + emr::to_string(h.demographics.race));
    numeric_values["age"].push_back(h.demographics.age_at_inference);
  }

  std::map<std::string, std::array<double, 4>> edges;
  std::set<std::string> all_tokens = categorical;
  for (auto& [code, values] : numeric_values) {
    edges[code] = quintile_edges(std::move(values));
    for (int b = 0; b <= 4; ++b) {
      all_tokens.insert(code + "#" + std::to_string(b));
    }
  }

  std::map<std::string, int> token_to_index;
  int next = 0;
  for (const auto& tok : all_tokens) token_to_index[tok] = next++;

  return Vocabulary(std::move(token_to_index), std::move(edges));
}

}  // namespace clinloop::features

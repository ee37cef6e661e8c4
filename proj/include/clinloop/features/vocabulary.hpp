#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clinloop/features/history.hpp"

#include "json.hpp"

namespace clinloop::features {

// Quintile bucket of `value` against four ascending edges:
// bin = |{i : value > edge_i}|, so a value equal to an edge bins low.
int bin_numeric(double value, const std::array<double, 4>& edges);

// Token space derived from the training split only. Categorical codes map
// one-to-one to tokens; numeric codes (lab components and "age") carry four
// nearest-rank quantile edges and expand to tokens code#0..code#4.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::map<std::string, int> token_to_index,
             std::map<std::string, std::array<double, 4>> numeric_bin_edges);

  std::size_t size() const { return token_to_index_.size(); }

  // -1 when the token was unseen at train time.
  int index_of(const std::string& token) const;

  const std::array<double, 4>* edges_for(const std::string& numeric_code) const;

  const std::map<std::string, int>& tokens() const { return token_to_index_; }
  const std::map<std::string, std::array<double, 4>>& numeric_bin_edges() const {
    return numeric_bin_edges_;
  }
  const std::string& token_at(int index) const { return index_to_token_[index]; }

  int medication_window_days() const { return kMedicationWindowDays; }
  int lab_window_days() const { return kLabWindowDays; }

  std::uint64_t fingerprint() const { return fingerprint_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);  // verifies fingerprint

 private:
  void finalize();

  std::map<std::string, int> token_to_index_;
  std::vector<std::string> index_to_token_;
  std::map<std::string, std::array<double, 4>> numeric_bin_edges_;
  std::uint64_t fingerprint_ = 0;
};

// Nearest-rank quantile edges at {0.2, 0.4, 0.6, 0.8}: the ceil(q*n)-th
// order statistic, 1-indexed.
std::array<double, 4> quintile_edges(std::vector<double> values);

Vocabulary build_vocabulary(const std::vector<PatientHistory>& training);

}  // namespace clinloop::features

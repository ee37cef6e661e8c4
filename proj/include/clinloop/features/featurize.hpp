#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clinloop/features/history.hpp"
#include "clinloop/features/vocabulary.hpp"

namespace clinloop::features {

// Sparse bag-of-tokens counts; indices are vocabulary indices and every
// stored count is >= 1.
struct FeatureVector {
  std::map<int, int> entries;
  std::uint64_t vocab_fingerprint = 0;

  bool operator==(const FeatureVector&) const = default;

  int count(int index) const {
    auto it = entries.find(index);
    return it == entries.end() ? 0 : it->second;
  }
};

// The token multiset for one history: all prior condition codes, medications
// within 28 days, labs within 14 days as code#bin, plus sex_X, race_X and
// age#bin. Repeats are preserved.
std::vector<std::string> tokenize_history(const PatientHistory& history,
                                          const Vocabulary& vocab);

struct VectorizeResult {
  FeatureVector vector;
  int oov_count = 0;  // tokens dropped for being unseen at train time
};

VectorizeResult vectorize(const std::vector<std::string>& tokens,
                          const Vocabulary& vocab);

// tokenize + vectorize in one step.
VectorizeResult featurize(const PatientHistory& history, const Vocabulary& vocab);

}  // namespace clinloop::features

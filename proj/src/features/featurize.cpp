#include "clinloop/features/featurize.hpp"

namespace clinloop::features {

namespace {

// Numeric observations bin against train-time edges; a code with no edges
// was never seen in training and yields a token that vectorize drops.
std::string numeric_token(const std::string& code, double value,
                          const Vocabulary& vocab) {
  const auto* edges = vocab.edges_for(code);
  if (edges == nullptr) return code + "#oov";
  return code + "#" + std::to_string(bin_numeric(value, *edges));
}

}  // namespace

std::vector<std::string> tokenize_history(const PatientHistory& history,
                                          const Vocabulary& vocab) {
  const Timestamp t = history.inference_time;
  std::vector<std::string> tokens;
  tokens.reserve(history.conditions.size() + history.medications.size() +
                 history.labs.size() + 3);

  for (const auto& c : history.conditions) {
    if (c.effective_time < t) tokens.push_back(c.code);
  }
  for (const auto& m : history.medications) {
    if (m.effective_time < t &&
        t - m.effective_time <= days(kMedicationWindowDays)) {
      tokens.push_back(m.code);
    }
  }
  for (const auto& l : history.labs) {
    if (l.effective_time < t && t - l.effective_time <= days(kLabWindowDays)) {
      tokens.push_back(numeric_token(l.code, l.numeric_value, vocab));
    }
  }
  tokens.push_back("sex_" + emr::to_string(history.demographics.sex));
  tokens.push_back("race_" + emr::to_string(history.demographics.race));
  tokens.push_back(numeric_token("age", history.demographics.age_at_inference,
                                 vocab));
  return tokens;
}

VectorizeResult vectorize(const std::vector<std::string>& tokens,
                          const Vocabulary& vocab) {
  VectorizeResult out;
  out.vector.vocab_fingerprint = vocab.fingerprint();
  for (const auto& tok : tokens) {
    const int idx = vocab.index_of(tok);
    if (idx < 0) {
      ++out.oov_count;
      continue;
    }
    ++out.vector.entries[idx];
  }
  return out;
}

VectorizeResult featurize(const PatientHistory& history,
                          const Vocabulary& vocab) {
  return vectorize(tokenize_history(history, vocab), vocab);
}

}  // namespace clinloop::features

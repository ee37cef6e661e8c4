#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "clinloop/emr/world.hpp"
#include "clinloop/monitor/metrics.hpp"

namespace testutil {

using namespace clinloop;

inline emr::WorldConfig small_world_config(std::uint64_t seed = 11,
                                           int n_patients = 40) {
  emr::WorldConfig cfg;
  cfg.seed = seed;
  cfg.n_patients = n_patients;
  cfg.condition_vocab_size = 40;
  cfg.medication_vocab_size = 25;
  return cfg;
}

inline Timestamp ts(const char* rfc3339) { return parse_rfc3339(rfc3339); }

// Unique scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  const auto dir = std::filesystem::temp_directory_path() /
                   ("clinloop_test_" + name + "_" + std::to_string(rng()));
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<monitor::LabeledSample> make_samples(
    const std::vector<double>& scores, const std::vector<bool>& labels) {
  std::vector<monitor::LabeledSample> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    monitor::LabeledSample s;
    s.packet_id = "p" + std::to_string(i);
    s.score = scores[i];
    s.label = labels[i];
    out.push_back(s);
  }
  return out;
}

// Exhaustive pair counting: the independent AUROC oracle (ties count 1/2).
inline double auroc_pair_count_oracle(
    const std::vector<monitor::LabeledSample>& samples) {
  double num = 0.0;
  double w_pos = 0.0;
  double w_neg = 0.0;
  bool has_pos = false, has_neg = false;
  for (const auto& p : samples) {
    (p.label ? has_pos : has_neg) = true;
    (p.label ? w_pos : w_neg) += p.weight;
  }
  if (!has_pos || !has_neg) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  for (const auto& p : samples) {
    if (!p.label) continue;
    for (const auto& q : samples) {
      if (q.label) continue;
      if (p.score > q.score) {
        num += p.weight * q.weight;
      } else if (p.score == q.score) {
        num += 0.5 * p.weight * q.weight;
      }
    }
  }
  return num / (w_pos * w_neg);
}

}  // namespace testutil

#pragma once

#include <string>

#include "clinloop/emr/client.hpp"
#include "clinloop/serve/store.hpp"

namespace clinloop::monitor {

// A label extractor pairs inference packets with their now-observable
// outcomes. Implementations are model-specific; the built-in one resolves an
// order's lab result for the deployed component.
class LabelExtractor {
 public:
  virtual ~LabelExtractor() = default;

  struct Outcome {
    int labeled = 0;    // label updates appended this run
    int pending = 0;    // matured packets with no observable result yet
    int immature = 0;   // packets still inside the maturation window
    int errors = 0;     // EMR failures; partial progress is kept
  };

  virtual Outcome run(serve::PacketStore& store, emr::EmrClient& emr,
                      Duration maturation, Timestamp now) = 0;
};

// Queries Observation?order={id}&component={code} for every unlabeled packet
// whose inference_time + maturation <= now. Idempotent: already-labeled
// packets are skipped, so repeated runs append nothing new. Subgroup
// demographics are resolved from the EMR at extraction time.
class OrderResultLabelExtractor : public LabelExtractor {
 public:
  OrderResultLabelExtractor(std::string model_id, std::string component_code)
      : model_id_(std::move(model_id)),
        component_code_(std::move(component_code)) {}

  Outcome run(serve::PacketStore& store, emr::EmrClient& emr,
              Duration maturation, Timestamp now) override;

 private:
  std::string model_id_;
  std::string component_code_;
};

}  // namespace clinloop::monitor

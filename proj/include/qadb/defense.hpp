#pragma once

#include <vector>

#include "qadb/attacks.hpp"
#include "qadb/data.hpp"
#include "qadb/nn.hpp"

namespace qadb {

enum class Origin { clean, adversarial };

// Clean samples followed by adversarial ones, each tagged with its origin.
struct AugmentedDataset {
  Dataset data;
  std::vector<Origin> origin;

  Index size() const { return data.size(); }
  Index count(Origin o) const;
  // Throws if the origin tags or dataset invariants are violated.
  void validate() const;
};

// One adversarial sample per input sample, produced by running `chain`
// against `model`. Labels are copied in order.
Dataset generate_adversarial_dataset(const HybridModel& model, const Dataset& data, const AttackChain& chain);

AugmentedDataset combine_datasets(const Dataset& clean, const Dataset& adversarial);

struct DefenseResult {
  TrainResult retrained;
  Index clean_count = 0;
  Index adversarial_count = 0;
};

// Attacks the trained model, merges the adversarial set with `clean` and
// continues training from the current weights with `config`.
DefenseResult adversarial_training(const HybridModel& model, const Dataset& clean, const AttackChain& chain,
                                   const TrainConfig& config);

}  // namespace qadb

#include "qadb/defense.hpp"

#include <algorithm>

namespace qadb {

Index AugmentedDataset::count(Origin o) const {
  return static_cast<Index>(std::count(origin.begin(), origin.end(), o));
}

void AugmentedDataset::validate() const {
  if (static_cast<Index>(origin.size()) != data.size()) {
    throw ValidationError("origin tags (" + std::to_string(origin.size()) + ") do not match sample count (" +
                          std::to_string(data.size()) + ")");
  }
  // Clean block first, adversarial block after.
  const auto first_adv = std::find(origin.begin(), origin.end(), Origin::adversarial);
  if (std::find(first_adv, origin.end(), Origin::clean) != origin.end()) {
    throw ValidationError("clean samples must precede adversarial samples");
  }
  if (data.images.size() > 0 && (data.images.data().minCoeff() < 0.0 || data.images.data().maxCoeff() > 1.0)) {
    throw ValidationError("augmented dataset pixels must lie in [0,1]");
  }
}

Dataset generate_adversarial_dataset(const HybridModel& model, const Dataset& data, const AttackChain& chain) {
  if (data.empty()) throw ValidationError("cannot generate adversarial samples from an empty dataset");
  const HybridClassifier clf(model);
  return attack_dataset(chain, clf, data);
}

AugmentedDataset combine_datasets(const Dataset& clean, const Dataset& adversarial) {
  AugmentedDataset out;
  if (adversarial.empty()) {
    out.data = clean;
  } else if (clean.empty()) {
    out.data = adversarial;
  } else {
    const Shape a(clean.images.dims().begin() + 1, clean.images.dims().end());
    const Shape b(adversarial.images.dims().begin() + 1, adversarial.images.dims().end());
    if (a != b) {
      throw ShapeError("cannot combine images " + shape_str(clean.images.dims()) + " with " +
                       shape_str(adversarial.images.dims()));
    }
    out.data.images = concat_rows(std::vector<Tensor>{clean.images, adversarial.images});
    out.data.labels = clean.labels;
    out.data.labels.insert(out.data.labels.end(), adversarial.labels.begin(), adversarial.labels.end());
  }
  out.origin.assign(static_cast<std::size_t>(clean.size()), Origin::clean);
  out.origin.resize(static_cast<std::size_t>(clean.size() + adversarial.size()), Origin::adversarial);
  out.validate();
  return out;
}

DefenseResult adversarial_training(const HybridModel& model, const Dataset& clean, const AttackChain& chain,
                                   const TrainConfig& config) {
  config.validate();
  const Dataset adversarial = generate_adversarial_dataset(model, clean, chain);
  const AugmentedDataset combined = combine_datasets(clean, adversarial);
  DefenseResult out;
  out.clean_count = combined.count(Origin::clean);
  out.adversarial_count = combined.count(Origin::adversarial);
  out.retrained = train(model, combined.data, config);
  return out;
}

}  // namespace qadb

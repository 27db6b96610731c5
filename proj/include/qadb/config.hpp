#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qadb/attacks.hpp"
#include "qadb/nn.hpp"

namespace qadb {

enum class DatasetKind { mnist, emnist_digits, synthetic };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& text);

// Parameters shared by every chain that uses a given attack kind.
struct AttackDefaults {
  AttackSpec fgsm = AttackSpec::fgsm();
  AttackSpec pgd = AttackSpec::pgd();
  AttackSpec cw = AttackSpec::cw();
};

struct ExperimentConfig {
  DatasetKind dataset = DatasetKind::mnist;
  std::vector<int> classes = {0, 1};
  Index train_size = 12665;
  Index test_size = 2115;
  ModelShape model;
  TrainConfig train;
  std::optional<Index> defense_epochs;  // unset: reuse train.epochs
  AttackDefaults attacks;
  std::vector<std::string> chains = {"FGSM+CW", "FGSM+PGD", "CW+PGD"};
  std::filesystem::path data_dir;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;

  void validate() const;
  TrainConfig defense_train() const;
  // Builds the named chain from the shared attack parameters. Seeds are
  // derived from `seed` and the chain name.
  AttackChain chain(const std::string& name) const;
  std::string dataset_name() const;
};

std::vector<std::string> preset_names();
// "paper-binary" or "desk".
ExperimentConfig preset_config(const std::string& name);

// Applies `key = value` lines on top of `config`. Blank lines and text after
// '#' are ignored; unknown keys and malformed values are errors that name
// the source and line.
void apply_config_text(ExperimentConfig& config, const std::string& text, const std::string& source = "<config>");
void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path);

// QADBENCH_DATA_DIR when set, otherwise config.data_dir, otherwise "data".
std::filesystem::path resolve_data_dir(const ExperimentConfig& config);

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag);

}  // namespace qadb

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qadb/config.hpp"
#include "qadb/data.hpp"
#include "qadb/defense.hpp"
#include "qadb/nn.hpp"
#include "qadb/report.hpp"

namespace qadb {

inline constexpr int kNoDefenseSteps = 11;
inline constexpr int kDefenseSteps = 16;

// Called once per procedure step, in order, before the step runs.
using StepLogger = std::function<void(int step, int total, const std::string& what)>;

// Timestamped "[time] step k/n: what" lines on stderr.
StepLogger stderr_step_logger();

struct ExperimentData {
  Dataset train;
  Dataset test;
};

// Loads (or synthesizes) the configured dataset, filters classes and
// subsamples to the configured sizes.
ExperimentData load_experiment_data(const ExperimentConfig& config);

// Trained baseline shared by every chain of a run.
struct Baseline {
  ExperimentData data;
  TrainResult trained;
  AccuracyResult clean;
};

struct RunResult {
  ReportRow row;
  std::vector<double> loss_curve;
  HybridModel model;
  // Set by run_with_defense only.
  std::vector<double> defense_loss_curve;
  std::optional<HybridModel> defended;
  std::optional<AccuracyResult> defended_clean;
  Index combined_size = 0;
};

// The eleven-step no-defense procedure. A step failure is rethrown with the
// step index prefixed, keeping the error category.
RunResult run_no_defense(const ExperimentConfig& config, const std::string& chain_name,
                         const StepLogger& log = {}, const Baseline* baseline = nullptr);

// The sixteen-step adversarial-training procedure. The evaluation attack
// after retraining is regenerated against the retrained model.
RunResult run_with_defense(const ExperimentConfig& config, const std::string& chain_name,
                           const StepLogger& log = {}, const Baseline* baseline = nullptr);

// Trains the baseline once, then runs the defense procedure per chain.
std::vector<RunResult> run_table5(const ExperimentConfig& config, const StepLogger& log = {});

// Report rows, loss-curve sidecars and optional SVG plots under out_dir.
// Returns the report path.
std::filesystem::path write_outputs(const std::vector<RunResult>& runs, const std::filesystem::path& out_dir,
                                    ReportFormat format, bool plot, const std::string& stem = "table5");

struct GradcheckEntry {
  std::string name;
  Index size = 0;
  double rel_error = 0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs_error = 0;
};

// Compares graph gradients of the hybrid loss with central differences for
// every parameter and the input, on a synthetic batch.
std::vector<GradcheckEntry> gradcheck(std::uint64_t seed = 0, Index samples = 4, int n_qubits = 3,
                                      double h = 1e-5);

}  // namespace qadb

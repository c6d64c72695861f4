#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "medcore/metrics.hpp"
#include "medcore/model.hpp"
#include "medcore/planner.hpp"
#include "medcore/synthdata.hpp"
#include "medcore/trainer.hpp"
#include "medcore_harness/config.hpp"

namespace medcore::harness {

/// One invocation's view of a run directory.
///
/// Layout below `run_dir`:
///   run.json                      run id and identity hash
///   train-base/, adapt/, calibrate/, theorem-check/, ablate/
///   score/<scorer>/, prune/<scorer>/, recover/<scorer>/, evaluate/<scorer>/,
///   sweep/<scorer>/, oracle-compare/<scorer>/, report/<scorer>/
/// Each stage directory holds its outputs, the effective resolved_config.json
/// and a manifest.json.
struct RunContext {
  ExperimentConfig config;
  std::filesystem::path run_dir;
  std::ostream* log = nullptr;  ///< progress lines; null for silence
};

/// Identity of a run: the resolved config with the per-command selections
/// (scorer, sweep grid) normalized away. A run directory refuses commands
/// whose identity differs.
std::string run_identity(const ExperimentConfig& config);

// --- deterministic data --------------------------------------------------------

struct DataSets {
  std::vector<std::vector<Sample>> calib;  ///< per adapted distribution
  std::vector<Sample> calib_pooled;
  std::vector<Sample> heldout;       ///< adapted-task mixture
  std::vector<Sample> base_heldout;  ///< base task
};
DataSets make_datasets(const ExperimentConfig& config);
SampleStream base_stream(const ExperimentConfig& config);
SampleStream adapt_stream(const ExperimentConfig& config);

// --- commands ------------------------------------------------------------------

using Command = std::function<void(const RunContext&)>;

/// Names accepted by run_command, in pipeline order where it applies.
const std::vector<std::string>& command_names();
/// Throws ConfigError for an unknown name.
void run_command(const std::string& name, const RunContext& ctx);

void cmd_train_base(const RunContext& ctx);
void cmd_adapt(const RunContext& ctx);
void cmd_calibrate(const RunContext& ctx);
void cmd_score(const RunContext& ctx);
void cmd_prune(const RunContext& ctx);
void cmd_recover(const RunContext& ctx);
void cmd_evaluate(const RunContext& ctx);
void cmd_sweep(const RunContext& ctx);
void cmd_theorem_check(const RunContext& ctx);
void cmd_oracle_compare(const RunContext& ctx);
void cmd_ablate(const RunContext& ctx);
void cmd_report(const RunContext& ctx);
/// train-base, adapt, calibrate, score, prune, recover, evaluate.
void cmd_pipeline(const RunContext& ctx);

// --- reusable steps ------------------------------------------------------------

/// Plan for `config.prune` on the adapted model, including MLP rescoring (and
/// interleaved recovery when configured). `params` are the parameters the plan
/// applies to: the adapted ones, or their interleaved-recovery update.
struct PlannedPrune {
  ScoreTable scores;
  PruningPlan plan;
  ParamStore params;
};
PlannedPrune plan_pruning(const ExperimentConfig& config, const Model& adapted, const ParamStore& base,
                          const DataSets& data, FisherCache& cache, std::ostream* log = nullptr);

/// Boundary-error adapter for the budget probe: 1 - BF1 on `heldout` after
/// removing the lowest-priority heads and MLP units worth c_h and c_m percent
/// of the model's parameters.
BoundaryErrorFn budget_error_fn(const Model& model, const ScoreTable& scores, const PruneConfig& prune,
                                const std::vector<Sample>& heldout, double bf1_tol);

}  // namespace medcore::harness

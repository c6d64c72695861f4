#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medcore/leverage.hpp"
#include "medcore/losses.hpp"
#include "medcore/model_config.hpp"
#include "medcore/scoring.hpp"
#include "medcore/synthdata.hpp"
#include "medcore/trainer.hpp"

namespace medcore::harness {

struct DataConfig {
  DistributionSpec base = default_base_spec();
  std::vector<DistributionSpec> adapted = default_adapted_specs();
  int calib_per_distribution = 32;  ///< calibration samples per adapted distribution
  int heldout = 64;                 ///< held-out adapted-task samples (mixture)
  int base_heldout = 64;            ///< held-out base-task samples
  std::int64_t train_pool = 0;      ///< 0: fresh sample every step
};

struct TrainStages {
  TrainConfig base;
  TrainConfig adapt;
  TrainConfig recover;
  /// Short recovery between the head and MLP phases; 0 disables it.
  int interleaved_steps = 0;
};

struct EvalConfig {
  double bf1_tol = 2.0;
  double base_dice_min = 0.90;   ///< train-base sanity threshold
  double adapt_gain_min = 0.02;  ///< adapted minus base Dice on the adapted task
};

struct TheoremConfig {
  double amplitude = 0.2;
  std::vector<double> scales = {1.0, 0.5, 0.25};
  int size = 32;
};

struct ProbeConfig {
  bool enabled = true;
  double h = 0.5;    ///< allocation the probe is centred on
  double m = 0.5;
  double eta = 1.0;  ///< budget shift in percent of model parameters
};

struct ExperimentConfig {
  std::string run_id = "default";
  std::string output_dir = "runs";
  std::uint64_t seed = 0;
  ModelConfig model;
  DataConfig data;
  LossWeights losses;
  PruneConfig prune;
  TrainStages train;
  SweepConfig sweep;
  ProbeConfig probe;
  TheoremConfig theorem;
  EvalConfig eval;

  void validate() const;
};

/// Stage defaults before any document is applied.
ExperimentConfig default_config();

/// Parses a JSON document over the defaults. Unknown keys, wrong types and
/// out-of-range values raise ConfigError naming `source` and the field path.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every field with its effective value, pretty-printed in a fixed key order.
std::string resolved_config_json(const ExperimentConfig& config);

/// Parses "h=0.3,0.5;m=0.5,0.7" into the sweep lists.
void apply_grid(SweepConfig& sweep, const std::string& grid);

/// Derived seed for an independent stream, e.g. model init or held-out data.
enum class SeedStream : std::uint64_t {
  model_init = 1,
  base_data = 2,
  adapt_data = 3,
  calibration = 4,
  heldout = 5,
  base_heldout = 6,
  random_scorer = 7,
  oracle = 8,
};
std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream);

}  // namespace medcore::harness

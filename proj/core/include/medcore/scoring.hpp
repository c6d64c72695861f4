#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "medcore/fisher.hpp"

namespace medcore {

enum class Scorer { medcore, random, magnitude, zero_only, vanilla_fisher, no_variance, no_reset, no_boundary };
const char* scorer_name(Scorer s);
Scorer parse_scorer(const std::string& name);
std::vector<Scorer> all_scorers();

enum class PruneMode { one_time, sequential };

struct PruneConfig {
  Scorer scorer = Scorer::medcore;
  PruneMode mode = PruneMode::one_time;
  double alpha_default = 0.5;
  std::vector<double> alpha;  ///< per-block override; empty uses alpha_default
  double beta = 0.25;
  double tau = 1.0;
  double eps = 1e-8;
  double eps_f = 1e-12;
  std::vector<double> pi;  ///< per adapted distribution; empty means uniform
  double head_sparsity = 0.0;
  double mlp_sparsity = 0.0;
  std::optional<std::vector<int>> protected_blocks;  ///< unset: proportional default
  int min_heads = 1;
  double rho_min = 0.05;
  bool rescore_mlp = true;
  std::uint64_t seed = 0;  ///< random scorer

  double alpha_for(int block) const;
  std::vector<double> resolved_pi(std::size_t distributions) const;
  /// Explicit list, or the last max(1, round(L / 6)) blocks.
  std::vector<int> resolved_protected(int num_blocks) const;
  void validate(int num_blocks) const;
};

struct ScoreRow {
  std::size_t group_id = 0;
  GroupKind kind = GroupKind::head;
  int block = 0;
  std::int64_t cost = 0;
  std::string label;
  std::vector<double> zero;   ///< per distribution r
  std::vector<double> reset;  ///< per distribution r
  std::vector<double> q;      ///< fused, per r
  double q_dist = 0;
  double priority = 0;
};

struct ScoreTable {
  Scorer scorer = Scorer::medcore;
  std::vector<ScoreRow> rows;  ///< indexed by group id
  std::vector<double> block_sensitivity;  ///< S_l per block; empty for Fisher-free scorers

  std::vector<double> priorities() const;
};

// Building blocks. Outer index r, inner index group id.
using PerDistribution = std::vector<std::vector<double>>;

/// Q^(r)_g = alpha_b(g) * zero + (1 - alpha_b(g)) * reset.
PerDistribution fuse_scores(const PerDistribution& zero, const PerDistribution& reset, const GroupCatalog& catalog,
                            const PruneConfig& config);
/// sum_r pi_r Q^(r) + beta * sum_r pi_r (Q^(r) - mean)^2.
std::vector<double> aggregate_distributions(const PerDistribution& q, const std::vector<double>& pi, double beta);
/// Q / (c + eps)^tau.
std::vector<double> priorities(const std::vector<double>& q, const std::vector<std::int64_t>& costs, double tau,
                               double eps);

/// Everything the Fisher-based scorers need. `base` is aligned with `adapted.params`.
struct ScoringContext {
  const Model* adapted = nullptr;
  const ParamStore* base = nullptr;
  std::vector<std::vector<Sample>> calib;  ///< per adapted distribution r
  LossWeights weights;
  GroupMask mask;  ///< groups already masked out during estimation
};

/// Fisher maps for one loss choice: adapted per r, base on pooled calibration
/// data, cross per r.
struct FisherSet {
  RiskLoss loss = RiskLoss::boundary;
  std::vector<FisherMap> adapted;
  FisherMap base;
  std::vector<FisherMap> cross;
  FisherMap pooled_adapted;  ///< adapted Fisher on the pooled calibration set
};

FisherSet estimate_fisher_set(const ScoringContext& ctx, RiskLoss loss, double eps_f);

/// Persists every map of a set in one tensor file (adapted maps first, then
/// base, cross maps and the pooled adapted map).
void save_fisher_set(const std::filesystem::path& path, const FisherSet& set);
FisherSet load_fisher_set(const std::filesystem::path& path, RiskLoss loss);

/// Lazily computed Fisher sets shared by several scorers.
class FisherCache {
 public:
  explicit FisherCache(const ScoringContext& ctx, double eps_f = 1e-12) : ctx_(ctx), eps_f_(eps_f) {}
  const FisherSet& get(RiskLoss loss);
  const ScoringContext& context() const { return ctx_; }
  void put(FisherSet set);

 private:
  const ScoringContext& ctx_;
  double eps_f_;
  std::map<RiskLoss, FisherSet> sets_;
};

/// Per-block sums S_l of the pi-weighted adapted Fisher.
std::vector<double> block_sensitivity(const FisherSet& set, const std::vector<double>& pi, int num_blocks);

/// Full score table for `config.scorer`.
ScoreTable score_groups(const PruneConfig& config, FisherCache& cache);

/// Fisher-free baselines: seeded uniform priorities (random) or group l2 norm (magnitude).
ScoreTable baseline_scores(Scorer kind, const ParamStore& params, const GroupCatalog& catalog, std::uint64_t seed);

/// l2 norm of a group's member parameters.
double group_norm(const ParamStore& params, const Group& g);

}  // namespace medcore

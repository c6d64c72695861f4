#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "medcore/scoring.hpp"

namespace medcore {

struct BlockBudget {
  std::vector<int> quotas;  ///< heads to prune per block
  int requested = 0;        ///< round(h * unprotected heads)
  int achieved = 0;
  bool flagged = false;     ///< min-retention made the request infeasible
};

/// Head quotas proportional to 1/S_l over unprotected blocks, largest-remainder
/// rounding, capped at count - min_heads with the excess redistributed. An empty
/// `sensitivity` means equal sensitivities.
BlockBudget block_budgets(const std::vector<double>& sensitivity, const GroupCatalog& catalog, double h,
                          const std::vector<int>& protected_blocks, int min_heads);
BlockBudget block_budgets(const FisherMap& fisher, const GroupCatalog& catalog, double h,
                          const std::vector<int>& protected_blocks, int min_heads);

enum class PlanPhase { none, head, mlp, head_second, mlp_second };
const char* plan_phase_name(PlanPhase p);

struct PruningPlan {
  std::vector<std::size_t> heads;         ///< phase 1, in removal order
  std::vector<std::size_t> mlps;          ///< phase 2, in removal order
  std::vector<std::size_t> second_heads;  ///< sequential pass on protected blocks
  std::vector<std::size_t> second_mlps;
  BlockBudget head_budget;
  std::vector<int> protected_blocks;
  int requested_mlps = 0;
  bool mlp_capped = false;  ///< rho_min floors stopped the MLP phase early
  std::optional<ScoreTable> mlp_scores;  ///< set when MLP priorities were recomputed

  std::vector<std::size_t> removed() const;
  GroupMask mask(const GroupCatalog& catalog) const;
  PlanPhase phase_of(std::size_t group) const;
  std::int64_t removed_cost(const GroupCatalog& catalog) const;
  bool flagged() const { return head_budget.flagged || mlp_capped; }
};

/// Recomputes scores for the model with the given head mask applied.
using MlpRescoreFn = std::function<ScoreTable(const GroupMask& head_mask)>;

/// Head phase by per-block quotas, then a global MLP phase with per-block
/// rho_min floors; sequential mode adds an h/2, m/2 pass on protected blocks.
/// Ties in priority go to the lower group id.
PruningPlan plan_cascade(const PruneConfig& config, const ScoreTable& scores, const GroupCatalog& catalog,
                         const MlpRescoreFn& rescore = {});

/// Minimum MLP units kept in a block of `units` hidden units.
int mlp_floor(int units, double rho_min);

/// CSV: group_id,label,kind,block,c_g,dzero,dreset,q_dist,P,pruned,phase.
std::string score_table_csv(const ScoreTable& scores, const PruningPlan* plan = nullptr,
                            const std::vector<double>& pi = {});

}  // namespace medcore

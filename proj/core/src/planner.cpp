#include "medcore/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "medcore/csv.hpp"
#include "medcore/error.hpp"

namespace medcore {
namespace {

int round_count(double x) { return static_cast<int>(std::floor(x + 0.5)); }

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

// Ascending priority, ties by ascending group id.
std::vector<std::size_t> sorted_by_priority(std::vector<std::size_t> ids, const ScoreTable& scores) {
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    const double pa = scores.rows.at(a).priority, pb = scores.rows.at(b).priority;
    return pa != pb ? pa < pb : a < b;
  });
  return ids;
}

// Distributes `amount` over `blocks` proportionally to `weight` with
// largest-remainder rounding (ties to the lower block index).
std::vector<int> largest_remainder(int amount, const std::vector<int>& blocks, const std::vector<double>& weight) {
  std::vector<int> out(blocks.size(), 0);
  double total = 0.0;
  for (double w : weight) total += w;
  if (blocks.empty() || amount <= 0) return out;
  std::vector<double> frac(blocks.size());
  int given = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const double share = total > 0 ? amount * weight[i] / total : static_cast<double>(amount) / blocks.size();
    out[i] = static_cast<int>(std::floor(share));
    frac[i] = share - out[i];
    given += out[i];
  }
  std::vector<std::size_t> order(blocks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; given < amount; k = (k + 1) % order.size(), ++given) ++out[order[k]];
  return out;
}

}  // namespace

int mlp_floor(int units, double rho_min) {
  // ceil, guarded against representation error in rho_min * units
  return std::max(1, static_cast<int>(std::ceil(rho_min * units - 1e-9)));
}

BlockBudget block_budgets(const std::vector<double>& sensitivity, const GroupCatalog& catalog, double h,
                          const std::vector<int>& protected_blocks, int min_heads) {
  if (!(h >= 0.0 && h < 1.0)) throw ArgumentError("block_budgets: h must lie in [0, 1)");
  const int blocks = catalog.num_blocks();
  if (!sensitivity.empty() && static_cast<int>(sensitivity.size()) != blocks) {
    throw ArgumentError("block_budgets: one sensitivity per block required");
  }
  BlockBudget out;
  out.quotas.assign(static_cast<std::size_t>(blocks), 0);
  std::vector<int> open;
  int total_heads = 0, total_cap = 0;
  std::vector<int> cap(static_cast<std::size_t>(blocks), 0);
  for (int b = 0; b < blocks; ++b) {
    if (contains(protected_blocks, b)) continue;
    const int n = catalog.count(GroupKind::head, b);
    total_heads += n;
    cap[static_cast<std::size_t>(b)] = std::max(0, n - min_heads);
    total_cap += cap[static_cast<std::size_t>(b)];
    if (cap[static_cast<std::size_t>(b)] > 0) open.push_back(b);
  }
  out.requested = round_count(h * total_heads);
  int remaining = std::min(out.requested, total_cap);
  out.flagged = out.requested > total_cap;

  while (remaining > 0 && !open.empty()) {
    std::vector<double> w;
    bool any_zero = false;
    for (int b : open) any_zero = any_zero || !(sensitivity.empty() || sensitivity[static_cast<std::size_t>(b)] > 0);
    for (int b : open) {
      if (sensitivity.empty()) {
        w.push_back(1.0);
      } else {
        const double s = sensitivity[static_cast<std::size_t>(b)];
        // A block with zero sensitivity takes precedence over all others.
        w.push_back(any_zero ? (s > 0 ? 0.0 : 1.0) : 1.0 / s);
      }
    }
    const std::vector<int> alloc = largest_remainder(remaining, open, w);
    std::vector<int> still_open;
    for (std::size_t i = 0; i < open.size(); ++i) {
      const auto b = static_cast<std::size_t>(open[i]);
      const int room = cap[b] - out.quotas[b];
      const int take = std::min(alloc[i], room);
      out.quotas[b] += take;
      remaining -= take;
      if (take < room) still_open.push_back(open[i]);
    }
    if (still_open.size() == open.size() && remaining > 0) {
      // No block saturated yet the allocation fell short; cannot happen with exact shares, but never loop forever.
      break;
    }
    open = std::move(still_open);
  }
  out.achieved = std::accumulate(out.quotas.begin(), out.quotas.end(), 0);
  return out;
}

BlockBudget block_budgets(const FisherMap& fisher, const GroupCatalog& catalog, double h,
                          const std::vector<int>& protected_blocks, int min_heads) {
  std::vector<double> s;
  for (int b = 0; b < catalog.num_blocks(); ++b) s.push_back(fisher.block_sum(b));
  return block_budgets(s, catalog, h, protected_blocks, min_heads);
}

const char* plan_phase_name(PlanPhase p) {
  switch (p) {
    case PlanPhase::none: return "none";
    case PlanPhase::head: return "head";
    case PlanPhase::mlp: return "mlp";
    case PlanPhase::head_second: return "head2";
    case PlanPhase::mlp_second: return "mlp2";
  }
  return "?";
}

std::vector<std::size_t> PruningPlan::removed() const {
  std::vector<std::size_t> out = heads;
  out.insert(out.end(), second_heads.begin(), second_heads.end());
  out.insert(out.end(), mlps.begin(), mlps.end());
  out.insert(out.end(), second_mlps.begin(), second_mlps.end());
  return out;
}

GroupMask PruningPlan::mask(const GroupCatalog& catalog) const {
  GroupMask m = catalog.all_active();
  for (auto id : removed()) m.at(id) = 0;
  return m;
}

PlanPhase PruningPlan::phase_of(std::size_t group) const {
  auto in = [group](const std::vector<std::size_t>& v) { return std::find(v.begin(), v.end(), group) != v.end(); };
  if (in(heads)) return PlanPhase::head;
  if (in(mlps)) return PlanPhase::mlp;
  if (in(second_heads)) return PlanPhase::head_second;
  if (in(second_mlps)) return PlanPhase::mlp_second;
  return PlanPhase::none;
}

std::int64_t PruningPlan::removed_cost(const GroupCatalog& catalog) const {
  std::int64_t c = 0;
  for (auto id : removed()) c += catalog.at(id).cost;
  return c;
}

namespace {

// Lowest-priority MLP units from `blocks`, at most `target`, honouring per-block floors.
std::vector<std::size_t> select_mlps(const ScoreTable& scores, const GroupCatalog& catalog,
                                     const std::vector<int>& blocks, int target, double rho_min) {
  std::vector<std::size_t> candidates;
  std::vector<int> room(static_cast<std::size_t>(catalog.num_blocks()), 0);
  for (int b : blocks) {
    const auto ids = catalog.ids(GroupKind::mlp, b);
    candidates.insert(candidates.end(), ids.begin(), ids.end());
    room[static_cast<std::size_t>(b)] = static_cast<int>(ids.size()) - mlp_floor(static_cast<int>(ids.size()), rho_min);
  }
  std::vector<std::size_t> out;
  for (auto id : sorted_by_priority(std::move(candidates), scores)) {
    if (static_cast<int>(out.size()) >= target) break;
    int& r = room[static_cast<std::size_t>(catalog.at(id).block)];
    if (r <= 0) continue;
    --r;
    out.push_back(id);
  }
  return out;
}

std::vector<std::size_t> select_heads(const ScoreTable& scores, const GroupCatalog& catalog, int block, int quota) {
  auto ids = sorted_by_priority(catalog.ids(GroupKind::head, block), scores);
  ids.resize(static_cast<std::size_t>(std::min<int>(quota, static_cast<int>(ids.size()))));
  return ids;
}

int count_units(const GroupCatalog& catalog, GroupKind kind, const std::vector<int>& blocks) {
  int n = 0;
  for (int b : blocks) n += catalog.count(kind, b);
  return n;
}

}  // namespace

PruningPlan plan_cascade(const PruneConfig& config, const ScoreTable& scores, const GroupCatalog& catalog,
                         const MlpRescoreFn& rescore) {
  config.validate(catalog.num_blocks());
  if (scores.rows.size() != catalog.size()) throw ArgumentError("plan_cascade: score table does not cover every group");
  PruningPlan plan;
  plan.protected_blocks = config.resolved_protected(catalog.num_blocks());
  std::vector<int> unprotected;
  for (int b = 0; b < catalog.num_blocks(); ++b) {
    if (!contains(plan.protected_blocks, b)) unprotected.push_back(b);
  }

  // Phase 1: heads, per-block quotas.
  plan.head_budget =
      block_budgets(scores.block_sensitivity, catalog, config.head_sparsity, plan.protected_blocks, config.min_heads);
  for (int b : unprotected) {
    const auto picked = select_heads(scores, catalog, b, plan.head_budget.quotas[static_cast<std::size_t>(b)]);
    plan.heads.insert(plan.heads.end(), picked.begin(), picked.end());
  }

  // Phase 2: MLP units, one global quota with rho_min floors.
  const ScoreTable* mlp_table = &scores;
  if (config.rescore_mlp && rescore && config.mlp_sparsity > 0) {
    GroupMask head_mask = catalog.all_active();
    for (auto id : plan.heads) head_mask[id] = 0;
    plan.mlp_scores = rescore(head_mask);
    if (plan.mlp_scores->rows.size() != catalog.size()) throw ArgumentError("plan_cascade: rescored table is incomplete");
    mlp_table = &*plan.mlp_scores;
  }
  plan.requested_mlps = round_count(config.mlp_sparsity * count_units(catalog, GroupKind::mlp, unprotected));
  plan.mlps = select_mlps(*mlp_table, catalog, unprotected, plan.requested_mlps, config.rho_min);
  plan.mlp_capped = static_cast<int>(plan.mlps.size()) < plan.requested_mlps;

  if (config.mode == PruneMode::sequential) {
    // Conservative second pass on the protected blocks at half the sparsities.
    const double h2 = config.head_sparsity / 2, m2 = config.mlp_sparsity / 2;
    for (int b : plan.protected_blocks) {
      const int n = catalog.count(GroupKind::head, b);
      const int quota = std::min(round_count(h2 * n), std::max(0, n - config.min_heads));
      const auto picked = select_heads(scores, catalog, b, quota);
      plan.second_heads.insert(plan.second_heads.end(), picked.begin(), picked.end());
    }
    const int target = round_count(m2 * count_units(catalog, GroupKind::mlp, plan.protected_blocks));
    plan.second_mlps = select_mlps(*mlp_table, catalog, plan.protected_blocks, target, config.rho_min);
  }
  return plan;
}

std::string score_table_csv(const ScoreTable& scores, const PruningPlan* plan, const std::vector<double>& pi) {
  CsvWriter csv({"group_id", "label", "kind", "block", "c_g", "dzero", "dreset", "q_dist", "P", "pruned", "phase"});
  for (const auto& base_row : scores.rows) {
    const ScoreRow* row = &base_row;
    if (plan && plan->mlp_scores && base_row.kind == GroupKind::mlp) row = &plan->mlp_scores->rows.at(base_row.group_id);
    auto mix = [&](const std::vector<double>& v) -> std::string {
      if (v.empty()) return "";
      const std::vector<double> w =
          pi.size() == v.size() ? pi : std::vector<double>(v.size(), 1.0 / static_cast<double>(v.size()));
      double s = 0.0;
      for (std::size_t r = 0; r < v.size(); ++r) s += w[r] * v[r];
      return format_double(s);
    };
    const PlanPhase phase = plan ? plan->phase_of(row->group_id) : PlanPhase::none;
    csv.row({std::to_string(row->group_id), row->label, group_kind_name(row->kind), std::to_string(row->block),
             std::to_string(row->cost), mix(row->zero), mix(row->reset), format_double(row->q_dist),
             format_double(row->priority), phase == PlanPhase::none ? "0" : "1", plan_phase_name(phase)});
  }
  return csv.str();
}

}  // namespace medcore

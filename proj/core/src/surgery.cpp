#include "medcore/surgery.hpp"

#include "medcore/error.hpp"

namespace medcore {

ParamStore apply_group_intervention(const ParamStore& params, const GroupCatalog& catalog, std::size_t group_id,
                                    Intervention kind, const ParamStore* ref) {
  const Group& g = catalog.at(group_id);
  if (kind == Intervention::reset) {
    if (ref == nullptr) throw ArgumentError("reset intervention requires a reference parameter store");
    params.require_aligned(*ref, "reset intervention");
  }
  ParamStore out = params;
  for (const auto& m : g.members) {
    Tensor& t = out.at(m.tensor);
    const Tensor* src = kind == Intervention::reset ? &ref->at(m.tensor) : nullptr;
    for_each_element(t, m, [&](std::size_t i) { t[i] = src ? (*src)[i] : 0.0; });
  }
  return out;
}

namespace {

Tensor keep_columns(const Tensor& t, const std::vector<std::int64_t>& cols) {
  Tensor out(Shape{t.dim(0), static_cast<std::int64_t>(cols.size())});
  for (std::int64_t r = 0; r < t.dim(0); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) out.at(r, static_cast<std::int64_t>(c)) = t.at(r, cols[c]);
  return out;
}

Tensor keep_rows(const Tensor& t, const std::vector<std::int64_t>& rows) {
  const std::int64_t cols = t.rank() == 2 ? t.dim(1) : 1;
  Shape dims = t.dims();
  dims[0] = static_cast<std::int64_t>(rows.size());
  Tensor out(dims);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::int64_t c = 0; c < cols; ++c)
      out[r * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)] =
          t[static_cast<std::size_t>(rows[r] * cols + c)];
  return out;
}

}  // namespace

RemovalResult physically_remove(const ParamStore& params, const ModelConfig& config, const GroupCatalog& catalog,
                                const std::set<std::size_t>& pruned) {
  for (auto id : pruned) catalog.at(id);
  const int blocks = config.num_blocks;
  const std::int64_t dh = config.head_dim();
  std::vector<std::vector<int>> head_origins(static_cast<std::size_t>(blocks));
  std::vector<std::vector<int>> mlp_origins(static_cast<std::size_t>(blocks));
  std::vector<std::vector<std::int64_t>> head_keep(static_cast<std::size_t>(blocks));
  std::vector<std::vector<std::int64_t>> mlp_keep(static_cast<std::size_t>(blocks));
  for (const auto& g : catalog.groups()) {
    if (pruned.count(g.id)) continue;
    const auto b = static_cast<std::size_t>(g.block);
    if (g.kind == GroupKind::head) {
      head_origins[b].push_back(g.origin);
      head_keep[b].push_back(g.unit);
    } else {
      mlp_origins[b].push_back(g.origin);
      mlp_keep[b].push_back(g.unit);
    }
  }
  for (int b = 0; b < blocks; ++b) {
    if (head_keep[static_cast<std::size_t>(b)].empty()) {
      throw InfeasiblePlanError("min-retention violated: removal would delete every head of block " +
                                std::to_string(b));
    }
    if (mlp_keep[static_cast<std::size_t>(b)].empty()) {
      throw InfeasiblePlanError("min-retention violated: removal would delete every MLP unit of block " +
                                std::to_string(b));
    }
  }

  ParamStore out = params;
  for (int b = 0; b < blocks; ++b) {
    std::vector<std::int64_t> head_cols;
    for (auto h : head_keep[static_cast<std::size_t>(b)])
      for (std::int64_t i = 0; i < dh; ++i) head_cols.push_back(h * dh + i);
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv"}) {
      out.at(block_param(b, w)) = keep_columns(params.at(block_param(b, w)), head_cols);
    }
    for (const char* bias : {"attn.bq", "attn.bk", "attn.bv"}) {
      out.at(block_param(b, bias)) = keep_rows(params.at(block_param(b, bias)), head_cols);
    }
    out.at(block_param(b, "attn.wo")) = keep_rows(params.at(block_param(b, "attn.wo")), head_cols);
    const auto& units = mlp_keep[static_cast<std::size_t>(b)];
    out.at(block_param(b, "mlp.w1")) = keep_columns(params.at(block_param(b, "mlp.w1")), units);
    out.at(block_param(b, "mlp.b1")) = keep_rows(params.at(block_param(b, "mlp.b1")), units);
    out.at(block_param(b, "mlp.w2")) = keep_rows(params.at(block_param(b, "mlp.w2")), units);
  }
  GroupCatalog next = GroupCatalog::build(config, out, head_origins, mlp_origins);
  return {std::move(out), std::move(next)};
}

RemovalResult physically_remove(const ParamStore& params, const ModelConfig& config, const GroupCatalog& catalog,
                                const GroupMask& mask) {
  if (mask.size() != catalog.size()) {
    throw ArgumentError("physically_remove: mask length does not match catalog");
  }
  std::set<std::size_t> pruned;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) pruned.insert(i);
  }
  return physically_remove(params, config, catalog, pruned);
}

}  // namespace medcore

#include "medcore/groups.hpp"

#include "medcore/error.hpp"

namespace medcore {

const char* group_kind_name(GroupKind kind) { return kind == GroupKind::head ? "head" : "mlp"; }

std::string Group::label() const {
  return "b" + std::to_string(block) + (kind == GroupKind::head ? ".h" : ".m") + std::to_string(origin);
}

GroupCatalog GroupCatalog::build(const ModelConfig& config, const ParamStore& params,
                                 const std::vector<std::vector<int>>& head_origins,
                                 const std::vector<std::vector<int>>& mlp_origins) {
  config.validate();
  GroupCatalog cat;
  cat.num_blocks_ = config.num_blocks;
  const std::int64_t dh = config.head_dim();
  std::vector<int> head_counts, mlp_counts;
  for (int b = 0; b < config.num_blocks; ++b) {
    const Tensor& wq = params.at(block_param(b, "attn.wq"));
    if (wq.rank() != 2 || wq.dim(1) % dh != 0) {
      throw ShapeError("group catalog: " + block_param(b, "attn.wq") + " shape " + shape_string(wq.dims()) +
                       " is not a whole number of heads");
    }
    head_counts.push_back(static_cast<int>(wq.dim(1) / dh));
    mlp_counts.push_back(static_cast<int>(params.at(block_param(b, "mlp.w1")).dim(1)));
  }
  auto origin = [](const std::vector<std::vector<int>>& o, int b, int u) {
    return o.empty() ? u : o.at(static_cast<std::size_t>(b)).at(static_cast<std::size_t>(u));
  };
  for (int b = 0; b < config.num_blocks; ++b) {
    for (int h = 0; h < head_counts[static_cast<std::size_t>(b)]; ++h) {
      Group g;
      g.id = cat.groups_.size();
      g.kind = GroupKind::head;
      g.block = b;
      g.unit = h;
      g.origin = origin(head_origins, b, h);
      const std::int64_t start = h * dh;
      for (const char* w : {"attn.wq", "attn.wk", "attn.wv"}) g.members.push_back({block_param(b, w), 1, start, dh});
      for (const char* bias : {"attn.bq", "attn.bk", "attn.bv"}) {
        g.members.push_back({block_param(b, bias), 0, start, dh});
      }
      g.members.push_back({block_param(b, "attn.wo"), 0, start, dh});
      cat.groups_.push_back(std::move(g));
    }
  }
  for (int b = 0; b < config.num_blocks; ++b) {
    for (int j = 0; j < mlp_counts[static_cast<std::size_t>(b)]; ++j) {
      Group g;
      g.id = cat.groups_.size();
      g.kind = GroupKind::mlp;
      g.block = b;
      g.unit = j;
      g.origin = origin(mlp_origins, b, j);
      g.members = {{block_param(b, "mlp.w1"), 1, j, 1}, {block_param(b, "mlp.b1"), 0, j, 1}, {block_param(b, "mlp.w2"), 0, j, 1}};
      cat.groups_.push_back(std::move(g));
    }
  }
  for (auto& g : cat.groups_) {
    g.cost = 0;
    for (const auto& m : g.members) {
      const Tensor& t = params.at(m.tensor);
      const std::int64_t other = t.rank() == 2 ? t.dim(1 - m.axis) : 1;
      g.cost += m.count * other;
    }
  }
  return cat;
}

const Group& GroupCatalog::at(std::size_t id) const {
  if (id >= groups_.size()) throw ArgumentError("unknown group id " + std::to_string(id));
  return groups_[id];
}

std::vector<std::size_t> GroupCatalog::ids(GroupKind kind) const {
  std::vector<std::size_t> out;
  for (const auto& g : groups_) {
    if (g.kind == kind) out.push_back(g.id);
  }
  return out;
}

std::vector<std::size_t> GroupCatalog::ids(GroupKind kind, int block) const {
  std::vector<std::size_t> out;
  for (const auto& g : groups_) {
    if (g.kind == kind && g.block == block) out.push_back(g.id);
  }
  return out;
}

int GroupCatalog::count(GroupKind kind, int block) const { return static_cast<int>(ids(kind, block).size()); }

std::int64_t GroupCatalog::total_cost() const {
  std::int64_t c = 0;
  for (const auto& g : groups_) c += g.cost;
  return c;
}

void for_each_element(const Tensor& tensor, const SliceRef& slice, const std::function<void(std::size_t)>& fn) {
  if (tensor.rank() == 1) {
    for (std::int64_t i = 0; i < slice.count; ++i) fn(static_cast<std::size_t>(slice.begin + i));
    return;
  }
  const std::int64_t rows = tensor.dim(0), cols = tensor.dim(1);
  if (slice.axis == 0) {
    for (std::int64_t r = slice.begin; r < slice.begin + slice.count; ++r)
      for (std::int64_t c = 0; c < cols; ++c) fn(static_cast<std::size_t>(r * cols + c));
  } else {
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = slice.begin; c < slice.begin + slice.count; ++c) fn(static_cast<std::size_t>(r * cols + c));
  }
}

std::int64_t masked_cost(const GroupCatalog& catalog, const GroupMask& mask) {
  if (mask.empty()) return 0;
  if (mask.size() != catalog.size()) {
    throw ArgumentError("mask length " + std::to_string(mask.size()) + " does not match " +
                        std::to_string(catalog.size()) + " groups");
  }
  std::int64_t c = 0;
  for (const auto& g : catalog.groups()) {
    if (mask[g.id] == 0) c += g.cost;
  }
  return c;
}

}  // namespace medcore

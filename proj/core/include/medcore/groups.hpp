#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "medcore/model_config.hpp"
#include "medcore/param_store.hpp"

namespace medcore {

enum class GroupKind { head, mlp };
const char* group_kind_name(GroupKind kind);

/// Contiguous range along one axis of a rank-1 or rank-2 tensor.
struct SliceRef {
  std::string tensor;
  int axis = 0;
  std::int64_t begin = 0;
  std::int64_t count = 0;
};

/// One structured group: an attention head (its q/k/v columns and biases plus
/// the matching output-projection rows) or one MLP hidden unit (first-layer
/// column, bias entry, second-layer row).
struct Group {
  std::size_t id = 0;
  GroupKind kind = GroupKind::head;
  int block = 0;
  int unit = 0;    ///< position within the block's current layout
  int origin = 0;  ///< index in the unpruned model
  std::int64_t cost = 0;
  std::vector<SliceRef> members;

  /// Stable label such as "b2.h1" or "b0.m17", using the origin index.
  std::string label() const;
};

/// 1 = active, 0 = masked. Indexed by Group::id; empty means all active.
using GroupMask = std::vector<std::uint8_t>;

class GroupCatalog {
 public:
  GroupCatalog() = default;

  /// Derives the partition from the current tensor shapes. Origins default to
  /// the unit index unless `head_origins` / `mlp_origins` (per block) are given.
  static GroupCatalog build(const ModelConfig& config, const ParamStore& params,
                            const std::vector<std::vector<int>>& head_origins = {},
                            const std::vector<std::vector<int>>& mlp_origins = {});

  const std::vector<Group>& groups() const noexcept { return groups_; }
  std::size_t size() const noexcept { return groups_.size(); }
  const Group& at(std::size_t id) const;
  int num_blocks() const noexcept { return num_blocks_; }

  std::vector<std::size_t> ids(GroupKind kind) const;
  std::vector<std::size_t> ids(GroupKind kind, int block) const;
  int count(GroupKind kind, int block) const;

  std::int64_t total_cost() const;
  GroupMask all_active() const { return GroupMask(groups_.size(), 1); }

 private:
  std::vector<Group> groups_;
  int num_blocks_ = 0;
};

/// Calls `fn(flat_index)` for every element of `tensor` covered by `slice`.
void for_each_element(const Tensor& tensor, const SliceRef& slice, const std::function<void(std::size_t)>& fn);

/// Sum of cost over groups with mask entry 0.
std::int64_t masked_cost(const GroupCatalog& catalog, const GroupMask& mask);

}  // namespace medcore

#pragma once

#include <cstddef>
#include <set>

#include "medcore/groups.hpp"
#include "medcore/model_config.hpp"
#include "medcore/param_store.hpp"

namespace medcore {

enum class Intervention { zero, reset };

/// Copy of `params` with group `group_id` set to zero, or to its values in `ref`
/// for a reset. Only the group's members change.
ParamStore apply_group_intervention(const ParamStore& params, const GroupCatalog& catalog, std::size_t group_id,
                                    Intervention kind, const ParamStore* ref = nullptr);

struct RemovalResult {
  ParamStore params;
  GroupCatalog catalog;
};

/// Deletes the listed groups from the tensors. Head removal drops the head's
/// q/k/v columns, biases and output-projection rows; MLP removal drops the
/// hidden unit's first-layer column, bias and second-layer row. Throws
/// InfeasiblePlanError if a block would lose all of its heads or MLP units.
RemovalResult physically_remove(const ParamStore& params, const ModelConfig& config, const GroupCatalog& catalog,
                                const std::set<std::size_t>& pruned);

/// Same as above, with the pruned set given as mask zeros.
RemovalResult physically_remove(const ParamStore& params, const ModelConfig& config, const GroupCatalog& catalog,
                                const GroupMask& mask);

}  // namespace medcore

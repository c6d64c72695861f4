#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "medcore/autograd.hpp"
#include "medcore/groups.hpp"
#include "medcore/model_config.hpp"
#include "medcore/param_store.hpp"

namespace medcore {

/// Deterministic initialization of every tensor from `seed`.
ParamStore build_model(const ModelConfig& config, std::uint64_t seed);

class BoundParams {
 public:
  const Var& operator[](const std::string& name) const;
  void emplace(const std::string& name, Var v) { vars_.emplace(name, v); }

 private:
  std::unordered_map<std::string, Var> vars_;
};

using TrainablePredicate = std::function<bool(const std::string&)>;

/// Puts every tensor on the tape; those accepted by `trainable` become named
/// parameter leaves, the rest constants. Frozen (prompt) tensors are always constants.
BoundParams bind_params(Tape& tape, const ParamStore& params, const TrainablePredicate& trainable = {});

struct ModelOutput {
  Var logits;    ///< H x W
  Var features;  ///< tokens x embed_dim encoder output
};

/// Forward pass. `mask` is indexed by catalog group id (empty means all active);
/// a zero entry drops that head's attention output before the output
/// projection, or that MLP hidden channel.
ModelOutput forward(Tape& tape, const BoundParams& params, const ModelConfig& config, const GroupCatalog& catalog,
                    const GroupMask& mask, const Tensor& image, const PromptBox& box);

/// Inference-only convenience returning the H x W logit map.
Tensor predict_logits(const ParamStore& params, const ModelConfig& config, const GroupCatalog& catalog,
                      const GroupMask& mask, const Tensor& image, const PromptBox& box);

struct ModelOutputs {
  Tensor logits;
  Tensor features;
};
ModelOutputs predict(const ParamStore& params, const ModelConfig& config, const GroupCatalog& catalog,
                     const GroupMask& mask, const Tensor& image, const PromptBox& box);

/// Config, parameters and the group catalog derived from them.
struct Model {
  ModelConfig config;
  ParamStore params;
  GroupCatalog catalog;

  static Model init(const ModelConfig& config, std::uint64_t seed);
  /// Wraps existing parameters; the catalog is rebuilt from tensor shapes.
  static Model wrap(const ModelConfig& config, ParamStore params);
};

/// Analytic multiply-add count (2mnk per matmul) from the surviving dims.
std::int64_t estimate_flops(const ModelConfig& config, const ParamStore& params, const GroupCatalog& catalog,
                            const GroupMask& mask = {});

}  // namespace medcore

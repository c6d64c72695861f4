#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "medcore/losses.hpp"
#include "medcore/model.hpp"

namespace medcore {

enum class TrainLoss { seg, boundary };

struct LossPoint {
  int step = 0;
  double loss = 0;
  double seg = 0, boundary = 0, feat = 0, logit = 0, freq = 0;
};

struct TrainConfig {
  int steps = 3000;
  int batch_size = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  TrainLoss loss = TrainLoss::seg;
  /// Tensor-name prefixes kept fixed in addition to the prompt tensors.
  std::vector<std::string> frozen;
  /// Loss-curve sampling cadence in steps (every step when 1).
  int log_every = 10;
  /// Sample indices cycle through [offset, offset + pool) when pool > 0.
  std::int64_t pool = 0;
  std::int64_t offset = 0;
  /// Called with every recorded loss-curve point; progress reporting only.
  std::function<void(const LossPoint&)> on_log;

  void validate() const;
  bool is_frozen(const std::string& name) const;
};

/// Deterministic sample source: index -> sample.
using SampleStream = std::function<Sample(std::int64_t)>;

struct TrainResult {
  ParamStore params;
  std::vector<LossPoint> curve;
};

/// Adam without weight decay:
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2,
///   theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps).
class Adam {
 public:
  Adam(const ParamStore& params, double lr, double beta1, double beta2, double eps);
  /// Applies one update to every tensor that has a gradient in `grads`.
  void step(ParamStore& params, const std::map<std::string, Tensor>& grads);
  int steps() const noexcept { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  ParamStore m_, v_;
};

/// Minibatch training on `stream`; batch gradients are per-sample gradients
/// averaged in sample order. `mask` keeps pruned groups inactive.
TrainResult train(const Model& model, const SampleStream& stream, const TrainConfig& config,
                  const LossWeights& weights = {}, const GroupMask& mask = {});

/// Fine-tunes a copy of the base parameters; the result stays aligned with them.
TrainResult adapt(const Model& base, const SampleStream& stream, const TrainConfig& config,
                  const LossWeights& weights = {});

/// Distillation-aided fine-tuning of a pruned model towards the unpruned
/// teacher. Teacher outputs are computed once per sample index.
TrainResult recover(const Model& pruned, const Model& teacher, const SampleStream& stream, const LossWeights& weights,
                    const TrainConfig& config, const GroupMask& mask = {});

std::string loss_curve_csv(const std::vector<LossPoint>& curve);

}  // namespace medcore

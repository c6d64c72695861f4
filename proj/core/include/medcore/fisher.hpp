#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "medcore/losses.hpp"
#include "medcore/model.hpp"
#include "medcore/surgery.hpp"

namespace medcore {

enum class FisherTag { adapted, base, cross };
const char* fisher_tag_name(FisherTag tag);

/// Loss driving Fisher estimation and the exact-intervention oracle.
enum class RiskLoss { seg, boundary };

/// Diagonal Fisher values keyed like the model's ParamStore. Frozen tensors hold zeros.
struct FisherMap {
  FisherTag tag = FisherTag::adapted;
  int distribution = -1;  ///< r for adapted / cross maps
  ParamStore values;

  double total() const;
  /// Sum over every tensor of encoder block `block`.
  double block_sum(int block) const;
};

/// Mean over samples of the squared per-sample gradient of the chosen loss.
FisherMap estimate_fisher(const Model& model, const std::vector<Sample>& calib, RiskLoss loss,
                          const LossWeights& weights, FisherTag tag = FisherTag::adapted, int distribution = -1,
                          const GroupMask& mask = {});

/// sqrt(fM * fS + eps_f), elementwise.
FisherMap cross_fisher(const FisherMap& fM, const FisherMap& fS, double eps_f = 1e-12);

/// pi-weighted average of several maps (e.g. the adapted maps over r).
FisherMap weighted_average(const std::vector<FisherMap>& maps, const std::vector<double>& weights);

/// 0.5 * sum_{i in g} F_i * theta_i^2 for every group.
std::vector<double> approx_zero_cost(const FisherMap& fM, const ParamStore& thetaM, const GroupCatalog& catalog);
/// 0.5 * sum_{i in g} F_i * (thetaM_i - thetaS_i)^2 for every group.
std::vector<double> approx_reset_cost(const FisherMap& fcross, const ParamStore& thetaM, const ParamStore& thetaS,
                                      const GroupCatalog& catalog);

/// Mean loss over `calib` (no gradients).
double empirical_risk(const Model& model, const std::vector<Sample>& calib, RiskLoss loss, const LossWeights& weights,
                      const GroupMask& mask = {});

/// Exact change in empirical risk when group g is zeroed or reset to `ref`.
double exact_intervention_oracle(const Model& model, const ParamStore& ref, const std::vector<Sample>& calib,
                                 std::size_t group, Intervention kind, RiskLoss loss = RiskLoss::seg,
                                 const LossWeights& weights = {});

/// Same, for every group, reusing the unperturbed risk.
std::vector<double> exact_intervention_sweep(const Model& model, const ParamStore& ref,
                                             const std::vector<Sample>& calib, Intervention kind,
                                             RiskLoss loss = RiskLoss::seg, const LossWeights& weights = {},
                                             const std::vector<std::size_t>& groups = {});

/// Entries are named "fisher/<tag>/<r>/<tensor>".
void save_fisher(const std::filesystem::path& path, const std::vector<FisherMap>& maps);
std::vector<FisherMap> load_fisher(const std::filesystem::path& path);

}  // namespace medcore

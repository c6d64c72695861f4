#pragma once

#include "medcore/autograd.hpp"
#include "medcore/synthdata.hpp"

namespace medcore {

struct LossWeights {
  double lambda_bd = 2.0;     ///< extra BCE weight on boundary-band pixels
  int band_width = 3;         ///< w of the boundary band
  double bce_scale = 1.0;     ///< multiplier on the (weighted) BCE term
  double dice_eps = 1e-6;     ///< soft Dice smoothing
  double lambda_boundary = 1.0;  ///< recovery weights, in term order bd, feat, logit, freq
  double lambda_feat = 0.5;
  double lambda_logit = 0.5;
  double lambda_freq = 0.25;

  void validate() const;
};

/// 1 - soft Dice on sigmoid(logits): (2 sum(p m) + eps) / (sum p + sum m + eps).
Var dice_loss(Var logits, const BinaryMask& mask, double dice_eps);

/// Dice loss plus mean per-pixel BCE.
Var seg_loss(Var logits, const BinaryMask& mask, double dice_eps = 1e-6);

/// Dice loss plus bce_scale * mean over pixels of (1 + lambda_bd * B(M)_u) * BCE_u.
/// With lambda_bd = 0 and bce_scale = 1 this equals seg_loss exactly.
Var boundary_loss(Var logits, const BinaryMask& mask, const LossWeights& w);
Var boundary_loss(Var logits, const BinaryMask& mask, const BinaryMask& band, const LossWeights& w);

struct RecoveryTerms {
  Var total;
  double seg = 0, boundary = 0, feat = 0, logit = 0, freq = 0;
};

/// seg + l1 * boundary-weighted BCE + l2 * feature MSE + l3 * band logit MSE +
/// l4 * Laplacian discrepancy between sigmoid(student) and the mask.
RecoveryTerms recovery_loss(Var student_logits, Var student_features, const Tensor& teacher_logits,
                            const Tensor& teacher_features, const BinaryMask& mask, const LossWeights& w);

/// Mean squared 4-neighbour Laplacian of an H x W map (replicate padding).
double laplacian_energy(const Tensor& map);

}  // namespace medcore

#include "medcore/losses.hpp"

#include "medcore/error.hpp"
#include "medcore/morphology.hpp"

namespace medcore {

void LossWeights::validate() const {
  for (double v : {lambda_bd, bce_scale, dice_eps, lambda_boundary, lambda_feat, lambda_logit, lambda_freq}) {
    if (!(v >= 0.0)) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (band_width < 1) throw ConfigError("boundary band width must be >= 1");
}

namespace {

void check_target(Var logits, const BinaryMask& mask, const char* op) {
  const Shape& d = logits.dims();
  if (d.size() != 2 || d[0] != mask.height() || d[1] != mask.width()) {
    throw ShapeError(std::string(op) + ": logits " + shape_string(d) + " vs mask " + std::to_string(mask.height()) +
                     "x" + std::to_string(mask.width()));
  }
  if (!logits.value().all_finite()) throw NumericError(std::string(op) + ": non-finite logits");
}

Var weighted_bce(Var logits, const Tensor& target, const BinaryMask& band, double lambda_bd) {
  Tape& tape = *logits.tape;
  Var bce = ops::bce_with_logits(logits, target);
  if (lambda_bd != 0.0) {
    Tensor weight = band.to_tensor();
    for (auto& v : weight.data()) v = 1.0 + lambda_bd * v;
    bce = ops::mul(bce, tape.constant(std::move(weight)));
  }
  return ops::mean(bce);
}

}  // namespace

Var dice_loss(Var logits, const BinaryMask& mask, double dice_eps) {
  check_target(logits, mask, "dice_loss");
  Tape& tape = *logits.tape;
  const Tensor target = mask.to_tensor();
  Var p = ops::sigmoid(logits);
  Var inter = ops::sum(ops::mul(p, tape.constant(target)));
  const double mask_sum = static_cast<double>(mask.count());
  Var num = ops::add_scalar(ops::scale(inter, 2.0), dice_eps);
  Var den = ops::add_scalar(ops::sum(p), mask_sum + dice_eps);
  return ops::add_scalar(ops::scale(ops::div(num, den), -1.0), 1.0);
}

Var seg_loss(Var logits, const BinaryMask& mask, double dice_eps) {
  check_target(logits, mask, "seg_loss");
  return ops::add(dice_loss(logits, mask, dice_eps), ops::mean(ops::bce_with_logits(logits, mask.to_tensor())));
}

Var boundary_loss(Var logits, const BinaryMask& mask, const BinaryMask& band, const LossWeights& w) {
  check_target(logits, mask, "boundary_loss");
  if (!(w.lambda_bd >= 0.0)) throw ArgumentError("boundary_loss: lambda_bd must be >= 0");
  Var bce = weighted_bce(logits, mask.to_tensor(), band, w.lambda_bd);
  if (w.bce_scale != 1.0) bce = ops::scale(bce, w.bce_scale);
  return ops::add(dice_loss(logits, mask, w.dice_eps), bce);
}

Var boundary_loss(Var logits, const BinaryMask& mask, const LossWeights& w) {
  return boundary_loss(logits, mask, boundary_map(mask, w.band_width), w);
}

RecoveryTerms recovery_loss(Var student_logits, Var student_features, const Tensor& teacher_logits,
                            const Tensor& teacher_features, const BinaryMask& mask, const LossWeights& w) {
  check_target(student_logits, mask, "recovery_loss");
  if (student_features.dims() != teacher_features.dims()) {
    throw ShapeError("recovery_loss: student features " + shape_string(student_features.dims()) +
                     " vs teacher features " + shape_string(teacher_features.dims()));
  }
  if (student_logits.dims() != teacher_logits.dims()) {
    throw ShapeError("recovery_loss: student logits " + shape_string(student_logits.dims()) + " vs teacher logits " +
                     shape_string(teacher_logits.dims()));
  }
  Tape& tape = *student_logits.tape;
  RecoveryTerms out;
  Var total = seg_loss(student_logits, mask, w.dice_eps);
  out.seg = total.value().item();

  const BinaryMask band = boundary_map(mask, w.band_width);
  const Tensor target = mask.to_tensor();
  if (w.lambda_boundary != 0.0) {
    Var bd = weighted_bce(student_logits, target, band, w.lambda_bd);
    if (w.bce_scale != 1.0) bd = ops::scale(bd, w.bce_scale);
    out.boundary = bd.value().item();
    total = ops::add(total, ops::scale(bd, w.lambda_boundary));
  }
  if (w.lambda_feat != 0.0) {
    Var feat = ops::mean(ops::square(ops::sub(student_features, tape.constant(teacher_features))));
    out.feat = feat.value().item();
    total = ops::add(total, ops::scale(feat, w.lambda_feat));
  }
  if (w.lambda_logit != 0.0) {
    const std::int64_t band_count = band.count();
    if (band_count > 0) {
      Var diff = ops::sub(student_logits, tape.constant(teacher_logits));
      Var masked = ops::mul(ops::square(diff), tape.constant(band.to_tensor()));
      Var logit = ops::scale(ops::sum(masked), 1.0 / static_cast<double>(band_count));
      out.logit = logit.value().item();
      total = ops::add(total, ops::scale(logit, w.lambda_logit));
    }
  }
  if (w.lambda_freq != 0.0) {
    Var lap_pred = ops::laplacian4(ops::sigmoid(student_logits));
    Var lap_mask = ops::laplacian4(tape.constant(target));
    Var freq = ops::mean(ops::square(ops::sub(lap_pred, lap_mask)));
    out.freq = freq.value().item();
    total = ops::add(total, ops::scale(freq, w.lambda_freq));
  }
  out.total = total;
  return out;
}

double laplacian_energy(const Tensor& map) {
  Tape tape(false);
  Var l = ops::laplacian4(tape.constant(map));
  return ops::mean(ops::square(l)).value().item();
}

}  // namespace medcore

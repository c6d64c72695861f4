#include "medcore/trainer.hpp"

#include <cmath>
#include <unordered_map>

#include "medcore/csv.hpp"
#include "medcore/error.hpp"

namespace medcore {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (steps < 0) fail("steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr >= 0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("Adam decay rates must lie in [0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps must be > 0");
  if (log_every < 1) fail("log_every must be >= 1");
  if (pool < 0 || offset < 0) fail("pool and offset must be >= 0");
}

bool TrainConfig::is_frozen(const std::string& name) const {
  if (ParamStore::is_frozen(name)) return true;
  for (const auto& p : frozen) {
    if (name.rfind(p, 0) == 0) return true;
  }
  return false;
}

Adam::Adam(const ParamStore& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& [name, t] : params.entries()) {
    m_.add(name, Tensor(t.dims()));
    v_.add(name, Tensor(t.dims()));
  }
}

void Adam::step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, t_);
  const double c2 = 1.0 - std::pow(b2_, t_);
  for (const auto& [name, g] : grads) {
    Tensor& theta = params.at(name);
    Tensor& m = m_.at(name);
    Tensor& v = v_.at(name);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      theta[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

namespace {

std::int64_t sample_index(const TrainConfig& c, int step, int k) {
  const std::int64_t raw = static_cast<std::int64_t>(step) * c.batch_size + k;
  return c.offset + (c.pool > 0 ? raw % c.pool : raw);
}

// Shared loop: `sample_loss` builds the per-sample loss on the given tape and
// fills the loss-curve components.
using SampleLossFn = std::function<Var(Tape&, const BoundParams&, std::int64_t, LossPoint&)>;

TrainResult run_loop(const Model& model, const TrainConfig& config, const SampleLossFn& sample_loss) {
  config.validate();
  TrainResult out;
  out.params = model.params;
  Adam adam(out.params, config.lr, config.beta1, config.beta2, config.adam_eps);
  const auto trainable = [&config](const std::string& name) { return !config.is_frozen(name); };
  for (int step = 0; step < config.steps; ++step) {
    std::map<std::string, Tensor> grads;
    LossPoint point;
    point.step = step;
    for (int k = 0; k < config.batch_size; ++k) {
      const std::int64_t idx = sample_index(config, step, k);
      Tape tape;
      const BoundParams bound = bind_params(tape, out.params, trainable);
      LossPoint parts;
      const Var loss = sample_loss(tape, bound, idx, parts);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("training diverged: non-finite loss at step " + std::to_string(step) + ", sample " +
                           std::to_string(idx) + " (lr " + format_double(config.lr) + ")");
      }
      for (auto& [name, g] : tape.backward(loss).parameters()) {
        auto it = grads.find(name);
        if (it == grads.end()) grads.emplace(name, std::move(g));
        else it->second += g;
      }
      point.loss += value;
      point.seg += parts.seg;
      point.boundary += parts.boundary;
      point.feat += parts.feat;
      point.logit += parts.logit;
      point.freq += parts.freq;
    }
    const double inv = 1.0 / config.batch_size;
    for (auto& [name, g] : grads) g *= inv;
    for (double* v : {&point.loss, &point.seg, &point.boundary, &point.feat, &point.logit, &point.freq}) *v *= inv;
    adam.step(out.params, grads);
    if (step % config.log_every == 0 || step + 1 == config.steps) {
      out.curve.push_back(point);
      if (config.on_log) config.on_log(point);
    }
  }
  return out;
}

}  // namespace

TrainResult train(const Model& model, const SampleStream& stream, const TrainConfig& config,
                  const LossWeights& weights, const GroupMask& mask) {
  weights.validate();
  return run_loop(model, config, [&](Tape& tape, const BoundParams& bound, std::int64_t idx, LossPoint& parts) {
    const Sample s = stream(idx);
    const ModelOutput o = forward(tape, bound, model.config, model.catalog, mask, s.image, s.box);
    Var loss = config.loss == TrainLoss::seg ? seg_loss(o.logits, s.mask, weights.dice_eps)
                                             : boundary_loss(o.logits, s.mask, weights);
    parts.seg = loss.value().item();
    return loss;
  });
}

TrainResult adapt(const Model& base, const SampleStream& stream, const TrainConfig& config,
                  const LossWeights& weights) {
  TrainResult r = train(base, stream, config, weights);
  r.params.require_aligned(base.params, "adaptation");
  return r;
}

TrainResult recover(const Model& pruned, const Model& teacher, const SampleStream& stream, const LossWeights& weights,
                    const TrainConfig& config, const GroupMask& mask) {
  weights.validate();
  struct Cached {
    Sample sample;
    Tensor logits, features;
  };
  std::unordered_map<std::int64_t, Cached> cache;
  return run_loop(pruned, config, [&](Tape& tape, const BoundParams& bound, std::int64_t idx, LossPoint& parts) {
    auto it = cache.find(idx);
    if (it == cache.end()) {
      Cached c;
      c.sample = stream(idx);
      const ModelOutputs t = predict(teacher.params, teacher.config, teacher.catalog, {}, c.sample.image, c.sample.box);
      c.logits = t.logits;
      c.features = t.features;
      it = cache.emplace(idx, std::move(c)).first;
    }
    const Cached& c = it->second;
    const ModelOutput o = forward(tape, bound, pruned.config, pruned.catalog, mask, c.sample.image, c.sample.box);
    const RecoveryTerms terms = recovery_loss(o.logits, o.features, c.logits, c.features, c.sample.mask, weights);
    parts.seg = terms.seg;
    parts.boundary = terms.boundary;
    parts.feat = terms.feat;
    parts.logit = terms.logit;
    parts.freq = terms.freq;
    return terms.total;
  });
}

std::string loss_curve_csv(const std::vector<LossPoint>& curve) {
  CsvWriter w({"step", "loss", "seg", "boundary", "feat", "logit", "freq"});
  for (const auto& p : curve) {
    w.row({std::to_string(p.step), format_double(p.loss), format_double(p.seg), format_double(p.boundary),
           format_double(p.feat), format_double(p.logit), format_double(p.freq)});
  }
  return w.str();
}

}  // namespace medcore

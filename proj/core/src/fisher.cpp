#include "medcore/fisher.hpp"

#include <cmath>

#include "medcore/checkpoint.hpp"
#include "medcore/error.hpp"
#include "medcore/morphology.hpp"

namespace medcore {

const char* fisher_tag_name(FisherTag tag) {
  switch (tag) {
    case FisherTag::adapted: return "adapted";
    case FisherTag::base: return "base";
    case FisherTag::cross: return "cross";
  }
  return "?";
}

double FisherMap::total() const {
  double s = 0.0;
  for (const auto& [name, t] : values.entries())
    for (double v : t.data()) s += v;
  return s;
}

double FisherMap::block_sum(int block) const {
  const std::string prefix = "enc.blocks." + std::to_string(block) + ".";
  double s = 0.0;
  for (const auto& [name, t] : values.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    for (double v : t.data()) s += v;
  }
  return s;
}

namespace {

Var sample_loss(Var logits, const Sample& s, RiskLoss loss, const LossWeights& w) {
  if (loss == RiskLoss::seg) return seg_loss(logits, s.mask, w.dice_eps);
  return boundary_loss(logits, s.mask, w);
}

ParamStore zeros_like(const ParamStore& p) {
  ParamStore out;
  for (const auto& [name, t] : p.entries()) out.add(name, Tensor(t.dims()));
  return out;
}

}  // namespace

FisherMap estimate_fisher(const Model& model, const std::vector<Sample>& calib, RiskLoss loss,
                          const LossWeights& weights, FisherTag tag, int distribution, const GroupMask& mask) {
  if (calib.empty()) throw ArgumentError("estimate_fisher: empty calibration set");
  FisherMap f;
  f.tag = tag;
  f.distribution = distribution;
  f.values = zeros_like(model.params);
  // Batch size 1: each sample's gradient is squared before averaging.
  for (const auto& s : calib) {
    Tape tape;
    const BoundParams bound = bind_params(tape, model.params);
    const ModelOutput out = forward(tape, bound, model.config, model.catalog, mask, s.image, s.box);
    const Var l = sample_loss(out.logits, s, loss, weights);
    const auto grads = tape.backward(l).parameters();
    for (auto& [name, acc] : f.values.entries()) {
      auto it = grads.find(name);
      if (it == grads.end()) continue;
      const Tensor& g = it->second;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] * g[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(calib.size());
  for (auto& [name, acc] : f.values.entries()) acc *= inv;
  return f;
}

FisherMap cross_fisher(const FisherMap& fM, const FisherMap& fS, double eps_f) {
  fM.values.require_aligned(fS.values, "cross_fisher");
  if (!(eps_f >= 0.0)) throw ArgumentError("cross_fisher: eps_f must be >= 0");
  FisherMap out;
  out.tag = FisherTag::cross;
  out.distribution = fM.tag == FisherTag::adapted ? fM.distribution : fS.distribution;
  out.values = fM.values;
  for (std::size_t k = 0; k < out.values.entries().size(); ++k) {
    Tensor& t = out.values.entries()[k].second;
    const Tensor& s = fS.values.entries()[k].second;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::sqrt(t[i] * s[i] + eps_f);
  }
  return out;
}

FisherMap weighted_average(const std::vector<FisherMap>& maps, const std::vector<double>& weights) {
  if (maps.empty() || maps.size() != weights.size()) {
    throw ArgumentError("weighted_average: need one weight per Fisher map");
  }
  FisherMap out;
  out.tag = maps.front().tag;
  out.distribution = -1;
  out.values = zeros_like(maps.front().values);
  for (std::size_t r = 0; r < maps.size(); ++r) {
    maps[r].values.require_aligned(out.values, "weighted_average");
    for (std::size_t k = 0; k < out.values.entries().size(); ++k) {
      Tensor& t = out.values.entries()[k].second;
      const Tensor& s = maps[r].values.entries()[k].second;
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += weights[r] * s[i];
    }
  }
  return out;
}

std::vector<double> approx_zero_cost(const FisherMap& fM, const ParamStore& thetaM, const GroupCatalog& catalog) {
  fM.values.require_aligned(thetaM, "approx_zero_cost");
  std::vector<double> out(catalog.size(), 0.0);
  for (const auto& g : catalog.groups()) {
    double s = 0.0;
    for (const auto& m : g.members) {
      const Tensor& f = fM.values.at(m.tensor);
      const Tensor& th = thetaM.at(m.tensor);
      for_each_element(th, m, [&](std::size_t i) { s += f[i] * th[i] * th[i]; });
    }
    out[g.id] = 0.5 * s;
  }
  return out;
}

std::vector<double> approx_reset_cost(const FisherMap& fcross, const ParamStore& thetaM, const ParamStore& thetaS,
                                      const GroupCatalog& catalog) {
  thetaM.require_aligned(thetaS, "approx_reset_cost");
  fcross.values.require_aligned(thetaM, "approx_reset_cost");
  std::vector<double> out(catalog.size(), 0.0);
  for (const auto& g : catalog.groups()) {
    double s = 0.0;
    for (const auto& m : g.members) {
      const Tensor& f = fcross.values.at(m.tensor);
      const Tensor& a = thetaM.at(m.tensor);
      const Tensor& b = thetaS.at(m.tensor);
      for_each_element(a, m, [&](std::size_t i) {
        const double d = a[i] - b[i];
        s += f[i] * d * d;
      });
    }
    out[g.id] = 0.5 * s;
  }
  return out;
}

double empirical_risk(const Model& model, const std::vector<Sample>& calib, RiskLoss loss, const LossWeights& weights,
                      const GroupMask& mask) {
  if (calib.empty()) throw ArgumentError("empirical_risk: empty calibration set");
  double total = 0.0;
  for (const auto& s : calib) {
    Tape tape(false);
    const BoundParams bound = bind_params(tape, model.params);
    const ModelOutput out = forward(tape, bound, model.config, model.catalog, mask, s.image, s.box);
    total += sample_loss(out.logits, s, loss, weights).value().item();
  }
  return total / static_cast<double>(calib.size());
}

double exact_intervention_oracle(const Model& model, const ParamStore& ref, const std::vector<Sample>& calib,
                                 std::size_t group, Intervention kind, RiskLoss loss, const LossWeights& weights) {
  return exact_intervention_sweep(model, ref, calib, kind, loss, weights, {group}).front();
}

std::vector<double> exact_intervention_sweep(const Model& model, const ParamStore& ref,
                                             const std::vector<Sample>& calib, Intervention kind, RiskLoss loss,
                                             const LossWeights& weights, const std::vector<std::size_t>& groups) {
  std::vector<std::size_t> ids = groups;
  if (ids.empty()) {
    for (const auto& g : model.catalog.groups()) ids.push_back(g.id);
  }
  const double base = empirical_risk(model, calib, loss, weights);
  std::vector<double> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    Model edited{model.config, apply_group_intervention(model.params, model.catalog, id, kind, &ref), model.catalog};
    if (edited.params == model.params) {
      out.push_back(0.0);
      continue;
    }
    out.push_back(empirical_risk(edited, calib, loss, weights) - base);
  }
  return out;
}

void save_fisher(const std::filesystem::path& path, const std::vector<FisherMap>& maps) {
  TensorEntries entries;
  for (const auto& m : maps) {
    const std::string prefix =
        std::string("fisher/") + fisher_tag_name(m.tag) + "/" + std::to_string(m.distribution) + "/";
    for (const auto& [name, t] : m.values.entries()) entries.emplace_back(prefix + name, t);
  }
  save_entries(path, entries);
}

std::vector<FisherMap> load_fisher(const std::filesystem::path& path) {
  std::vector<FisherMap> maps;
  std::string current;
  for (auto& [name, t] : load_entries(path)) {
    // fisher/<tag>/<r>/<tensor>
    const auto p1 = name.find('/');
    const auto p2 = name.find('/', p1 + 1);
    const auto p3 = name.find('/', p2 + 1);
    if (name.rfind("fisher/", 0) != 0 || p2 == std::string::npos || p3 == std::string::npos) {
      throw IoError("fisher file " + path.string() + ": malformed entry name '" + name + "'");
    }
    const std::string key = name.substr(0, p3);
    if (key != current) {
      current = key;
      FisherMap m;
      const std::string tag = name.substr(p1 + 1, p2 - p1 - 1);
      if (tag == "adapted") m.tag = FisherTag::adapted;
      else if (tag == "base") m.tag = FisherTag::base;
      else if (tag == "cross") m.tag = FisherTag::cross;
      else throw IoError("fisher file " + path.string() + ": unknown tag '" + tag + "'");
      m.distribution = std::stoi(name.substr(p2 + 1, p3 - p2 - 1));
      maps.push_back(std::move(m));
    }
    maps.back().values.add(name.substr(p3 + 1), std::move(t));
  }
  return maps;
}

}  // namespace medcore

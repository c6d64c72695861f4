#include "medcore/scoring.hpp"

#include <cmath>

#include "medcore/error.hpp"
#include "medcore/rng.hpp"

namespace medcore {

const char* scorer_name(Scorer s) {
  switch (s) {
    case Scorer::medcore: return "medcore";
    case Scorer::random: return "random";
    case Scorer::magnitude: return "magnitude";
    case Scorer::zero_only: return "zero-only";
    case Scorer::vanilla_fisher: return "vanilla-fisher";
    case Scorer::no_variance: return "no-variance";
    case Scorer::no_reset: return "no-reset";
    case Scorer::no_boundary: return "no-boundary";
  }
  return "?";
}

std::vector<Scorer> all_scorers() {
  return {Scorer::medcore,        Scorer::random,      Scorer::magnitude, Scorer::zero_only,
          Scorer::vanilla_fisher, Scorer::no_variance, Scorer::no_reset,  Scorer::no_boundary};
}

Scorer parse_scorer(const std::string& name) {
  for (auto s : all_scorers()) {
    if (name == scorer_name(s)) return s;
  }
  throw ConfigError("unknown scorer '" + name +
                    "' (expected medcore, random, magnitude, zero-only, vanilla-fisher, no-variance, no-reset or "
                    "no-boundary)");
}

double PruneConfig::alpha_for(int block) const {
  if (alpha.empty()) return alpha_default;
  if (block < 0 || static_cast<std::size_t>(block) >= alpha.size()) {
    throw ConfigError("prune.alpha has no entry for block " + std::to_string(block));
  }
  return alpha[static_cast<std::size_t>(block)];
}

std::vector<double> PruneConfig::resolved_pi(std::size_t distributions) const {
  if (pi.empty()) return std::vector<double>(distributions, 1.0 / static_cast<double>(distributions));
  if (pi.size() != distributions) {
    throw ConfigError("prune.pi has " + std::to_string(pi.size()) + " weights for " + std::to_string(distributions) +
                      " distributions");
  }
  return pi;
}

std::vector<int> PruneConfig::resolved_protected(int num_blocks) const {
  if (protected_blocks) return *protected_blocks;
  const int n = std::max(1, static_cast<int>(std::lround(num_blocks / 6.0)));
  std::vector<int> out;
  for (int b = std::max(0, num_blocks - n); b < num_blocks; ++b) out.push_back(b);
  return out;
}

void PruneConfig::validate(int num_blocks) const {
  auto fail = [](const std::string& m) { throw ConfigError("prune config: " + m); };
  auto unit = [](double a) { return a >= 0.0 && a <= 1.0; };
  if (!unit(alpha_default)) fail("alpha must lie in [0, 1]");
  for (double a : alpha) {
    if (!unit(a)) fail("alpha must lie in [0, 1]");
  }
  if (!alpha.empty() && static_cast<int>(alpha.size()) != num_blocks) fail("alpha needs one entry per block");
  if (!(beta >= 0)) fail("beta must be >= 0");
  if (!(tau >= 0)) fail("tau must be >= 0");
  if (!(eps >= 0)) fail("eps must be >= 0");
  if (!(eps_f >= 0)) fail("eps_f must be >= 0");
  if (!(head_sparsity >= 0 && head_sparsity < 1)) fail("head sparsity h must lie in [0, 1)");
  if (!(mlp_sparsity >= 0 && mlp_sparsity < 1)) fail("mlp sparsity m must lie in [0, 1)");
  if (min_heads < 1) fail("min_heads must be >= 1");
  if (!(rho_min > 0 && rho_min <= 1)) fail("rho_min must lie in (0, 1]");
  if (!pi.empty()) {
    double s = 0;
    for (double p : pi) {
      if (!(p >= 0)) fail("pi weights must be >= 0");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) fail("pi weights must sum to 1");
  }
  for (int b : resolved_protected(num_blocks)) {
    if (b < 0 || b >= num_blocks) fail("protected block " + std::to_string(b) + " out of range");
  }
}

std::vector<double> ScoreTable::priorities() const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.priority);
  return out;
}

PerDistribution fuse_scores(const PerDistribution& zero, const PerDistribution& reset, const GroupCatalog& catalog,
                            const PruneConfig& config) {
  if (zero.size() != reset.size()) throw ArgumentError("fuse_scores: zero and reset cover different distributions");
  PerDistribution q(zero.size());
  for (std::size_t r = 0; r < zero.size(); ++r) {
    if (zero[r].size() != catalog.size() || reset[r].size() != catalog.size()) {
      throw ArgumentError("fuse_scores: missing intervention cost for distribution " + std::to_string(r));
    }
    q[r].resize(catalog.size());
    for (const auto& g : catalog.groups()) {
      const double a = config.alpha_for(g.block);
      if (!(a >= 0.0 && a <= 1.0)) throw ArgumentError("fuse_scores: alpha outside [0, 1]");
      q[r][g.id] = a * zero[r][g.id] + (1.0 - a) * reset[r][g.id];
    }
  }
  return q;
}

std::vector<double> aggregate_distributions(const PerDistribution& q, const std::vector<double>& pi, double beta) {
  if (q.empty() || q.size() != pi.size()) throw ArgumentError("aggregate_distributions: need one weight per distribution");
  const std::size_t k = q.front().size();
  std::vector<double> out(k, 0.0);
  for (std::size_t g = 0; g < k; ++g) {
    double m = 0.0;
    for (std::size_t r = 0; r < q.size(); ++r) m += pi[r] * q[r][g];
    double var = 0.0;
    for (std::size_t r = 0; r < q.size(); ++r) var += pi[r] * (q[r][g] - m) * (q[r][g] - m);
    out[g] = beta == 0.0 ? m : m + beta * var;
  }
  return out;
}

std::vector<double> priorities(const std::vector<double>& q, const std::vector<std::int64_t>& costs, double tau,
                               double eps) {
  if (q.size() != costs.size()) throw ArgumentError("priorities: score and cost lengths differ");
  std::vector<double> out(q.size());
  for (std::size_t g = 0; g < q.size(); ++g) {
    if (costs[g] <= 0) throw ArgumentError("priorities: group cost must be positive");
    out[g] = tau == 0.0 ? q[g] : q[g] / std::pow(static_cast<double>(costs[g]) + eps, tau);
  }
  return out;
}

FisherSet estimate_fisher_set(const ScoringContext& ctx, RiskLoss loss, double eps_f) {
  if (ctx.adapted == nullptr || ctx.base == nullptr) throw ArgumentError("scoring context lacks a model");
  if (ctx.calib.empty()) throw ArgumentError("scoring context has no calibration data");
  ctx.adapted->params.require_aligned(*ctx.base, "base vs adapted parameters");
  FisherSet set;
  set.loss = loss;
  std::vector<Sample> pooled;
  std::vector<double> counts;
  for (std::size_t r = 0; r < ctx.calib.size(); ++r) {
    set.adapted.push_back(
        estimate_fisher(*ctx.adapted, ctx.calib[r], loss, ctx.weights, FisherTag::adapted, static_cast<int>(r), ctx.mask));
    pooled.insert(pooled.end(), ctx.calib[r].begin(), ctx.calib[r].end());
    counts.push_back(static_cast<double>(ctx.calib[r].size()));
  }
  for (auto& c : counts) c /= static_cast<double>(pooled.size());
  set.pooled_adapted = weighted_average(set.adapted, counts);
  const Model base{ctx.adapted->config, *ctx.base, ctx.adapted->catalog};
  set.base = estimate_fisher(base, pooled, loss, ctx.weights, FisherTag::base, -1, ctx.mask);
  for (const auto& f : set.adapted) set.cross.push_back(cross_fisher(f, set.base, eps_f));
  return set;
}

void save_fisher_set(const std::filesystem::path& path, const FisherSet& set) {
  std::vector<FisherMap> maps = set.adapted;
  maps.push_back(set.base);
  maps.insert(maps.end(), set.cross.begin(), set.cross.end());
  maps.push_back(set.pooled_adapted);
  save_fisher(path, maps);
}

FisherSet load_fisher_set(const std::filesystem::path& path, RiskLoss loss) {
  FisherSet set;
  set.loss = loss;
  bool have_base = false, have_pooled = false;
  for (auto& m : load_fisher(path)) {
    if (m.tag == FisherTag::base) {
      set.base = std::move(m);
      have_base = true;
    } else if (m.tag == FisherTag::cross) {
      set.cross.push_back(std::move(m));
    } else if (m.distribution < 0) {
      set.pooled_adapted = std::move(m);
      have_pooled = true;
    } else {
      set.adapted.push_back(std::move(m));
    }
  }
  if (!have_base || !have_pooled || set.adapted.empty() || set.adapted.size() != set.cross.size()) {
    throw IoError("incomplete Fisher set in " + path.string());
  }
  for (std::size_t r = 0; r < set.adapted.size(); ++r) {
    if (set.adapted[r].distribution != static_cast<int>(r) || set.cross[r].distribution != static_cast<int>(r)) {
      throw IoError("Fisher set in " + path.string() + " has out-of-order distributions");
    }
  }
  return set;
}

const FisherSet& FisherCache::get(RiskLoss loss) {
  auto it = sets_.find(loss);
  if (it == sets_.end()) it = sets_.emplace(loss, estimate_fisher_set(ctx_, loss, eps_f_)).first;
  return it->second;
}

void FisherCache::put(FisherSet set) {
  const RiskLoss key = set.loss;
  sets_.insert_or_assign(key, std::move(set));
}

std::vector<double> block_sensitivity(const FisherSet& set, const std::vector<double>& pi, int num_blocks) {
  const FisherMap avg = weighted_average(set.adapted, pi);
  std::vector<double> s;
  for (int b = 0; b < num_blocks; ++b) s.push_back(avg.block_sum(b));
  return s;
}

double group_norm(const ParamStore& params, const Group& g) {
  double s = 0.0;
  for (const auto& m : g.members) {
    const Tensor& t = params.at(m.tensor);
    for_each_element(t, m, [&](std::size_t i) { s += t[i] * t[i]; });
  }
  return std::sqrt(s);
}

namespace {

ScoreTable skeleton(Scorer scorer, const GroupCatalog& catalog) {
  ScoreTable t;
  t.scorer = scorer;
  for (const auto& g : catalog.groups()) {
    ScoreRow r;
    r.group_id = g.id;
    r.kind = g.kind;
    r.block = g.block;
    r.cost = g.cost;
    r.label = g.label();
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace

ScoreTable baseline_scores(Scorer kind, const ParamStore& params, const GroupCatalog& catalog, std::uint64_t seed) {
  if (kind != Scorer::random && kind != Scorer::magnitude) {
    throw ArgumentError(std::string("baseline_scores: '") + scorer_name(kind) + "' needs Fisher information");
  }
  ScoreTable t = skeleton(kind, catalog);
  for (auto& row : t.rows) {
    if (kind == Scorer::random) {
      // One independent draw per group: priorities are uniform within every block.
      CounterRng rng(seed, 0x72616e646f6d0000ULL ^ static_cast<std::uint64_t>(catalog.at(row.group_id).origin) ^
                               (static_cast<std::uint64_t>(row.block) << 20) ^
                               (row.kind == GroupKind::mlp ? (1ULL << 40) : 0ULL));
      row.priority = rng.uniform();
    } else {
      row.priority = group_norm(params, catalog.at(row.group_id));
    }
    row.q_dist = row.priority;
  }
  return t;
}

ScoreTable score_groups(const PruneConfig& config, FisherCache& cache) {
  const ScoringContext& ctx = cache.context();
  if (ctx.adapted == nullptr) throw ArgumentError("score_groups: no model in scoring context");
  const Model& model = *ctx.adapted;
  const GroupCatalog& catalog = model.catalog;
  if (config.scorer == Scorer::random || config.scorer == Scorer::magnitude) {
    return baseline_scores(config.scorer, model.params, catalog, config.seed);
  }
  const bool seg_fisher = config.scorer == Scorer::no_boundary || config.scorer == Scorer::vanilla_fisher;
  const FisherSet& set = cache.get(seg_fisher ? RiskLoss::seg : RiskLoss::boundary);
  const ParamStore& base = *ctx.base;

  PruneConfig eff = config;
  if (config.scorer == Scorer::zero_only || config.scorer == Scorer::no_reset) {
    eff.alpha.assign(static_cast<std::size_t>(catalog.num_blocks()), 1.0);
  }
  if (config.scorer == Scorer::no_variance) eff.beta = 0.0;

  PerDistribution zero, reset;
  std::vector<double> pi;
  if (config.scorer == Scorer::vanilla_fisher) {
    // One pooled distribution, plain adapted Fisher in place of the cross map, no variance term.
    zero.push_back(approx_zero_cost(set.pooled_adapted, model.params, catalog));
    reset.push_back(approx_reset_cost(set.pooled_adapted, model.params, base, catalog));
    pi = {1.0};
    eff.beta = 0.0;
  } else {
    pi = config.resolved_pi(set.adapted.size());
    for (std::size_t r = 0; r < set.adapted.size(); ++r) {
      zero.push_back(approx_zero_cost(set.adapted[r], model.params, catalog));
      reset.push_back(approx_reset_cost(set.cross[r], model.params, base, catalog));
    }
  }
  const PerDistribution q = fuse_scores(zero, reset, catalog, eff);
  const std::vector<double> qd = aggregate_distributions(q, pi, eff.beta);
  std::vector<std::int64_t> costs;
  for (const auto& g : catalog.groups()) costs.push_back(g.cost);
  const std::vector<double> p = priorities(qd, costs, eff.tau, eff.eps);

  ScoreTable t = skeleton(config.scorer, catalog);
  for (auto& row : t.rows) {
    const std::size_t g = row.group_id;
    for (std::size_t r = 0; r < zero.size(); ++r) {
      row.zero.push_back(zero[r][g]);
      row.reset.push_back(reset[r][g]);
      row.q.push_back(q[r][g]);
    }
    row.q_dist = qd[g];
    row.priority = p[g];
    if (!std::isfinite(row.priority)) throw NumericError("non-finite priority for group " + row.label);
  }
  if (config.scorer == Scorer::vanilla_fisher) {
    for (int b = 0; b < catalog.num_blocks(); ++b) t.block_sensitivity.push_back(set.pooled_adapted.block_sum(b));
  } else {
    t.block_sensitivity = block_sensitivity(set, pi, catalog.num_blocks());
  }
  return t;
}

}  // namespace medcore

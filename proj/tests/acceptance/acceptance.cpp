// Acceptance suite: one PASS/FAIL line per criterion. Thresholds are fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <tuple>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "medcore/checkpoint.hpp"
#include "medcore/csv.hpp"
#include "medcore/error.hpp"
#include "medcore/fisher.hpp"
#include "medcore/gradcheck.hpp"
#include "medcore/leverage.hpp"
#include "medcore/losses.hpp"
#include "medcore/model.hpp"
#include "medcore/planner.hpp"
#include "medcore/rng.hpp"
#include "medcore/scoring.hpp"
#include "medcore/stats.hpp"
#include "medcore/surgery.hpp"
#include "medcore/synthdata.hpp"
#include "medcore/trainer.hpp"
#include "medcore_harness/config.hpp"
#include "medcore_harness/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace medcore;
using namespace medcore::harness;

namespace {

// --- pinned thresholds ---------------------------------------------------------
constexpr double kGradRelTol = 1e-4;          // criterion 1
constexpr int kGradSeeds = 20;
constexpr double kGradStep = 1e-4;
constexpr double kGradSeconds = 60;
constexpr double kSpearmanMin = 0.8;          // criterion 2
constexpr int kFisherSeeds = 5;
constexpr double kFisherSeconds = 300;
constexpr int kFisherBaseSteps = 3000;
constexpr int kFisherAdaptSteps = 1500;
constexpr int kFisherCalib = 64;
constexpr double kTheoremRatioMax = 0.4;      // criterion 3
constexpr double kTheoremLinearTol = 1e-9;
constexpr double kTheoremSeconds = 10;
constexpr double kRemovalTol = 1e-9;          // criterion 4
constexpr int kRemovalInputs = 10;
constexpr int kRemovalSets = 5;
constexpr int kLocalizationSeeds = 5;         // criterion 5
constexpr int kOrderingSeeds = 5;             // criterion 7
constexpr double kOrderingSeconds = 30 * 60;
constexpr double kOrderingHeads = 0.5;        // ~50% encoder-parameter reduction on the default model
constexpr double kOrderingMlp = 0.9;
constexpr double kEncoderPctLo = 45, kEncoderPctHi = 55;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::ostream* g_log = nullptr;
void progress(const std::string& line) {
  if (g_log) *g_log << "  .. " << line << std::endl;
}

// --- shared fixtures -------------------------------------------------------------

ModelConfig small_config(int blocks) {
  ModelConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.num_blocks = blocks;
  c.heads = 2;
  c.mlp_hidden = 8;
  c.decoder_channels1 = 8;
  c.decoder_channels2 = 4;
  return c;
}

SampleStream spec_stream(const DistributionSpec& spec, std::uint64_t seed, int size) {
  return [spec, seed, size](std::int64_t i) { return generate_one(spec, seed, i, size); };
}

SampleStream mixture_stream(std::uint64_t seed, int size) {
  auto mix = std::make_shared<MixtureSource>(default_adapted_specs(), seed, size);
  return [mix](std::int64_t i) { return mix->sample(i); };
}

TrainConfig train_config(int steps, int batch, double lr, std::uint64_t seed) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = batch;
  c.lr = lr;
  c.seed = seed;
  c.log_every = std::max(1, steps);
  return c;
}

// --- criterion 1 -------------------------------------------------------------------

Outcome gradient_integrity() {
  ModelConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.embed_dim = 8;
  c.num_blocks = 2;
  c.heads = 2;
  c.mlp_hidden = 8;
  c.decoder_channels1 = 4;
  c.decoder_channels2 = 4;
  DistributionSpec spec = default_base_spec();
  spec.size_min = 1;
  spec.size_max = 3;
  spec.jitter = 1;

  Timer timer;
  double worst = 0.0;
  std::string worst_at;
  std::size_t coords = 0;
  for (int seed = 0; seed < kGradSeeds; ++seed) {
    const Model m = Model::init(c, static_cast<std::uint64_t>(seed));
    const Sample s = generate_one(spec, static_cast<std::uint64_t>(seed), 0, c.image_size);
    std::vector<Tensor> thetas;
    for (const auto& [name, t] : m.params.entries()) {
      if (!ParamStore::is_frozen(name)) thetas.push_back(t);
    }
    for (const RiskLoss loss : {RiskLoss::seg, RiskLoss::boundary}) {
      const MultiScalarFn f = [&](Tape& tape, const std::vector<Var>& vars) {
        BoundParams p;
        std::size_t k = 0;
        for (const auto& [name, t] : m.params.entries()) {
          p.emplace(name, ParamStore::is_frozen(name) ? tape.constant(t) : vars[k++]);
        }
        const ModelOutput o = forward(tape, p, m.config, m.catalog, {}, s.image, s.box);
        return loss == RiskLoss::seg ? seg_loss(o.logits, s.mask) : boundary_loss(o.logits, s.mask, LossWeights{});
      };
      const GradCheckResult r = grad_check(f, thetas, kGradStep);
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_at = "seed " + std::to_string(seed) + (loss == RiskLoss::seg ? " seg" : " boundary") +
                   ", analytic " + fmt(r.analytic, 6) + " vs numeric " + fmt(r.numeric, 6);
      }
      coords += r.coordinates;
    }
  }
  const double t = timer.seconds();
  return {worst < kGradRelTol && t < kGradSeconds,
          "max rel error " + fmt(worst) + " over " + std::to_string(coords) + " coordinates, " +
              std::to_string(kGradSeeds) + " seeds x {seg, boundary}, worst at " + worst_at + ", " + fmt(t, 3) + " s (limits " + fmt(kGradRelTol) +
              ", " + fmt(kGradSeconds) + " s)"};
}

// --- criterion 2 -------------------------------------------------------------------

struct FaithfulnessSeed {
  double zero = 0, reset = 0;
};

// Controlled adaptation: only encoder block `block` moves, everything else keeps its base values.
TrainConfig single_block_adaptation(const ModelConfig& c, int block, int steps, std::uint64_t seed) {
  TrainConfig t = train_config(steps, 4, 2e-3, seed);
  t.frozen = {"enc.patch.", "enc.pos", "enc.ln_f.", "dec."};
  for (int b = 0; b < c.num_blocks; ++b) {
    if (b != block) t.frozen.push_back(block_param(b, ""));
  }
  return t;
}

FaithfulnessSeed fisher_faithfulness_seed(std::uint64_t seed) {
  const ModelConfig c = small_config(2);
  const Model base = Model::wrap(c, train(Model::init(c, seed), spec_stream(default_base_spec(), seed, 16),
                                          train_config(kFisherBaseSteps, 4, 3e-3, seed)).params);
  const TrainConfig ac = single_block_adaptation(c, static_cast<int>(seed % 2), kFisherAdaptSteps, seed);
  const Model adapted = Model::wrap(c, adapt(base, mixture_stream(seed + 1000, 16), ac).params);
  const std::vector<Sample> calib = MixtureSource(default_adapted_specs(), seed + 2000, 16).take(0, kFisherCalib);

  // Same loss on both sides: the segmentation risk.
  const RiskLoss loss = RiskLoss::seg;
  const LossWeights w;
  const FisherMap fm = estimate_fisher(adapted, calib, loss, w);
  const FisherMap fs = estimate_fisher(base, calib, loss, w, FisherTag::base);
  const FisherMap fx = cross_fisher(fm, fs, 1e-12);
  const auto az = approx_zero_cost(fm, adapted.params, adapted.catalog);
  const auto ar = approx_reset_cost(fx, adapted.params, base.params, adapted.catalog);
  const auto heads = adapted.catalog.ids(GroupKind::head);
  const auto ez = exact_intervention_sweep(adapted, base.params, calib, Intervention::zero, loss, w, heads);
  const auto er = exact_intervention_sweep(adapted, base.params, calib, Intervention::reset, loss, w, heads);
  std::vector<double> vaz, var;
  for (auto g : heads) {
    vaz.push_back(az[g]);
    var.push_back(ar[g]);
  }
  return {spearman(vaz, ez), spearman(var, er)};
}

Outcome fisher_faithfulness() {
  Timer timer;
  std::vector<double> zs, rs;
  for (int s = 0; s < kFisherSeeds; ++s) {
    const FaithfulnessSeed r = fisher_faithfulness_seed(static_cast<std::uint64_t>(s));
    zs.push_back(r.zero);
    rs.push_back(r.reset);
    progress("seed " + std::to_string(s) + ": spearman zero " + fmt(r.zero) + ", reset " + fmt(r.reset));
  }
  const double mz = median(zs), mr = median(rs), t = timer.seconds();
  return {mz >= kSpearmanMin && mr >= kSpearmanMin && t < kFisherSeconds,
          "median Spearman zero " + fmt(mz) + ", reset " + fmt(mr) + " over " + std::to_string(kFisherSeeds) +
              " seeds (min " + fmt(kSpearmanMin) + "), " + fmt(t, 3) + " s"};
}

// --- criterion 3 -------------------------------------------------------------------

Outcome theorem_verification() {
  Timer timer;
  const TheoremReport r =
      theorem_check({FieldFamily::linear, FieldFamily::circle, FieldFamily::ellipse, FieldFamily::wavy});
  const double t = timer.seconds();
  return {r.median_ratio <= kTheoremRatioMax && r.median_ratio > 0 && r.linear_max_residual <= kTheoremLinearTol &&
              t < kTheoremSeconds,
          "median halving ratio " + fmt(r.median_ratio) + " (max " + fmt(kTheoremRatioMax) + "), linear residual " +
              fmt(r.linear_max_residual) + ", " + fmt(t, 3) + " s"};
}

// --- criterion 4 -------------------------------------------------------------------

Outcome removal_equivalence() {
  const Model m = Model::init(ModelConfig{}, 4);
  const auto spec = default_adapted_specs()[0];
  double worst = 0.0;
  bool counts_ok = true;
  for (int set = 0; set < kRemovalSets; ++set) {
    CounterRng rng(static_cast<std::uint64_t>(set), 0x72656d);
    GroupMask mask = m.catalog.all_active();
    for (int b = 0; b < m.config.num_blocks; ++b) {
      const auto heads = m.catalog.ids(GroupKind::head, b);
      const auto keep_head = heads[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(heads.size()) - 1))];
      for (auto id : heads) {
        if (id != keep_head && rng.uniform() < 0.5) mask[id] = 0;
      }
      const auto mlps = m.catalog.ids(GroupKind::mlp, b);
      const auto keep_mlp = mlps[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(mlps.size()) - 1))];
      const double p = rng.uniform(0.1, 0.9);
      for (auto id : mlps) {
        if (id != keep_mlp && rng.uniform() < p) mask[id] = 0;
      }
    }
    const RemovalResult r = physically_remove(m.params, m.config, m.catalog, mask);
    std::int64_t expected = 0;
    for (const auto& g : m.catalog.groups()) {
      if (!mask[g.id]) expected += g.cost;
    }
    counts_ok = counts_ok && m.params.parameter_count() - r.params.parameter_count() == expected;
    for (int k = 0; k < kRemovalInputs; ++k) {
      const Sample s = generate_one(spec, 77, set * kRemovalInputs + k, m.config.image_size);
      const Tensor a = predict_logits(m.params, m.config, m.catalog, mask, s.image, s.box);
      const Tensor b = predict_logits(r.params, m.config, r.catalog, {}, s.image, s.box);
      worst = std::max(worst, max_abs_diff(a, b));
    }
  }
  return {worst <= kRemovalTol && counts_ok,
          "max |masked - removed| " + fmt(worst) + " over " + std::to_string(kRemovalInputs) + " inputs x " +
              std::to_string(kRemovalSets) + " prune sets; parameter delta == sum c_g: " + (counts_ok ? "yes" : "NO")};
}

// --- criterion 5 -------------------------------------------------------------------

Outcome reset_localization() {
  const ModelConfig c = small_config(4);
  int hits = 0;
  std::string blocks;
  for (int s = 0; s < kLocalizationSeeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const int target = s % c.num_blocks;
    const Model init = Model::init(c, seed);
    const Model base = Model::wrap(c, train(init, spec_stream(default_base_spec(), seed, 16),
                                            train_config(60, 4, 3e-3, seed)).params);
    TrainConfig ac = train_config(40, 4, 2e-3, seed);
    ac.frozen = {"enc.patch.", "enc.pos", "enc.ln_f.", "dec."};
    for (int b = 0; b < c.num_blocks; ++b) {
      if (b != target) ac.frozen.push_back(block_param(b, ""));
    }
    const Model adapted = Model::wrap(c, adapt(base, mixture_stream(seed + 10, 16), ac).params);

    ScoringContext ctx;
    ctx.adapted = &adapted;
    ctx.base = &base.params;
    for (int r = 0; r < 3; ++r) {
      ctx.calib.push_back(generate(default_adapted_specs()[static_cast<std::size_t>(r)], seed + 20, 8, 16));
    }
    FisherCache cache(ctx);
    const ScoreTable t = score_groups(PruneConfig{}, cache);
    std::size_t best = 0;
    double best_v = -1.0;
    for (const auto& row : t.rows) {
      const double v = mean(row.reset);
      if (v > best_v) {
        best_v = v;
        best = row.group_id;
      }
    }
    const int got = adapted.catalog.at(best).block;
    hits += got == target;
    blocks += (blocks.empty() ? "" : ", ") + std::to_string(target) + "->" + std::to_string(got);
  }
  return {hits == kLocalizationSeeds, std::to_string(hits) + "/" + std::to_string(kLocalizationSeeds) +
                                          " seeds put argmax reset score in the adapted block (adapted->argmax: " +
                                          blocks + ")"};
}

// --- criterion 6 -------------------------------------------------------------------

Outcome plateau_behavior() {
  const Model m = Model::init(ModelConfig{}, 0);
  const ScoreTable scores = baseline_scores(Scorer::magnitude, m.params, m.catalog, 0);
  PruneConfig pc;
  pc.head_sparsity = 0.3;
  const auto prot = pc.resolved_protected(m.config.num_blocks);

  // Constraint arithmetic: every unprotected block keeps mlp_floor units.
  std::int64_t plateau_mlp = 0;
  int capacity = 0, unprotected_units = 0;
  for (int b = 0; b < m.config.num_blocks; ++b) {
    if (std::find(prot.begin(), prot.end(), b) != prot.end()) continue;
    const auto ids = m.catalog.ids(GroupKind::mlp, b);
    const int room = static_cast<int>(ids.size()) - mlp_floor(static_cast<int>(ids.size()), pc.rho_min);
    capacity += room;
    unprotected_units += static_cast<int>(ids.size());
    plateau_mlp += room * m.catalog.at(ids[0]).cost;
  }

  const double predicted = static_cast<double>(capacity) / unprotected_units;
  std::int64_t head_cost = -1, plateau = -1;
  double activation = -1;
  bool heads_fixed = true, rising = true, flat = true;
  std::int64_t prev = -1;
  for (int k = 30; k <= 99; ++k) {
    pc.mlp_sparsity = k / 100.0;
    const PruningPlan p = plan_cascade(pc, scores, m.catalog);
    std::int64_t hc = 0;
    for (auto id : p.heads) hc += m.catalog.at(id).cost;
    if (head_cost < 0) {
      head_cost = hc;
      plateau = head_cost + plateau_mlp;
    }
    heads_fixed = heads_fixed && hc == head_cost;
    const std::int64_t cost = p.removed_cost(m.catalog);
    if (activation < 0 && cost == plateau) activation = pc.mlp_sparsity;
    if (activation >= 0) {
      flat = flat && cost == plateau;
    } else {
      rising = rising && cost < plateau && cost >= prev;
    }
    prev = cost;
  }
  // The cap binds once round(m * units) exceeds the removable capacity.
  const bool at_cap = activation > 0 && std::abs(activation - predicted) <= 0.5 / unprotected_units + 0.01;
  const bool ok = activation > 0 && heads_fixed && rising && flat && at_cap;
  return {ok, "h=0.3: removed params rise with m until m=" + fmt(activation) + " (cap " + std::to_string(capacity) +
                  "/" + std::to_string(unprotected_units) + " units = " + fmt(predicted) + "), then equal " +
                  std::to_string(plateau) + " = heads " + std::to_string(head_cost) + " + MLP " +
                  std::to_string(plateau_mlp) + " for every m up to 0.99"};
}

// --- pipeline-backed criteria ---------------------------------------------------------

struct Workspace {
  fs::path root;
  bool verbose = false;
};

ExperimentConfig ordering_config(std::uint64_t seed) {
  ExperimentConfig c = default_config();
  c.run_id = "acceptance-" + std::to_string(seed);
  c.seed = seed;
  c.train.base.steps = 600;
  c.train.adapt.steps = 300;
  c.train.recover.steps = 100;
  c.prune.head_sparsity = kOrderingHeads;
  c.prune.mlp_sparsity = kOrderingMlp;
  c.validate();
  return c;
}

RunContext run_context(const Workspace& ws, const ExperimentConfig& c, const std::string& name) {
  RunContext ctx;
  ctx.config = c;
  ctx.run_dir = ws.root / name;
  ctx.log = ws.verbose ? &std::cout : nullptr;
  return ctx;
}

bool stage_done(const RunContext& ctx, const std::string& stage) {
  return fs::exists(ctx.run_dir / stage / "manifest.json");
}

/// Runs the stages still missing; a finished stage is reused across criteria.
void ensure_stages(const RunContext& ctx, const std::vector<std::pair<std::string, std::string>>& stages) {
  for (const auto& [command, dir] : stages) {
    if (!stage_done(ctx, dir)) run_command(command, ctx);
  }
}

struct AblationRow {
  std::int64_t removed = 0;
  double encoder_pct = 0, bf1 = 0;
};

std::map<std::string, AblationRow> read_ablation(const fs::path& path) {
  const CsvTable t = parse_csv(read_text_file(path));
  std::map<std::string, AblationRow> out;
  for (const auto& r : t.rows) {
    out[r[t.column("scorer")]] = {std::stoll(r[t.column("params_removed")]),
                                  std::stod(r[t.column("encoder_removed_pct")]), std::stod(r[t.column("bf1")])};
  }
  return out;
}

const std::vector<std::pair<std::string, std::string>> kAblateStages = {
    {"train-base", "train-base"}, {"adapt", "adapt"}, {"calibrate", "calibrate"}, {"ablate", "ablate"}};

Outcome baseline_ordering(const Workspace& ws) {
  Timer timer;
  std::vector<double> med, mag, rnd, zo;
  bool matched = true;
  double enc_lo = 100, enc_hi = 0;
  for (int s = 0; s < kOrderingSeeds; ++s) {
    const RunContext ctx = run_context(ws, ordering_config(static_cast<std::uint64_t>(s)), "seed" + std::to_string(s));
    ensure_stages(ctx, kAblateStages);
    const auto rows = read_ablation(ctx.run_dir / "ablate" / "ablation.csv");
    const AblationRow& a = rows.at("medcore");
    for (const char* k : {"magnitude", "random", "zero-only"}) matched = matched && rows.at(k).removed == a.removed;
    enc_lo = std::min(enc_lo, a.encoder_pct);
    enc_hi = std::max(enc_hi, a.encoder_pct);
    med.push_back(a.bf1);
    mag.push_back(rows.at("magnitude").bf1);
    rnd.push_back(rows.at("random").bf1);
    zo.push_back(rows.at("zero-only").bf1);
    progress("seed " + std::to_string(s) + ": BF1 medcore " + fmt(a.bf1) + ", magnitude " + fmt(mag.back()) +
             ", random " + fmt(rnd.back()) + ", zero-only " + fmt(zo.back()) + ", encoder reduction " +
             fmt(a.encoder_pct) + "%");
  }
  const double t = timer.seconds();
  const bool reduction_ok = enc_lo >= kEncoderPctLo && enc_hi <= kEncoderPctHi;
  return {median(med) >= median(mag) && matched && reduction_ok && t < kOrderingSeconds,
          "median BF1 medcore " + fmt(median(med)) + " vs magnitude " + fmt(median(mag)) + " (random " +
              fmt(median(rnd)) + ", zero-only " + fmt(median(zo)) + ") over " + std::to_string(kOrderingSeeds) +
              " seeds; encoder reduction " + fmt(enc_lo) + "-" + fmt(enc_hi) + "%, matched counts: " +
              (matched ? "yes" : "NO") + ", " + fmt(t, 4) + " s (limit " + fmt(kOrderingSeconds) + " s)"};
}

bool close(double a, double b, double tol = 1e-9) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

Outcome sweep_machinery(const Workspace& ws) {
  const RunContext ctx = run_context(ws, ordering_config(0), "seed0");
  ensure_stages(ctx, {{"train-base", "train-base"}, {"adapt", "adapt"}, {"calibrate", "calibrate"},
                      {"sweep", "sweep/medcore"}, {"report", "report/medcore"}});
  const SweepConfig& g = ctx.config.sweep;
  const std::size_t nh = g.h_list.size(), nm = g.m_list.size();
  const auto steps = parse_step_records(read_text_file(ctx.run_dir / "sweep" / "medcore" / "steps.csv"));
  const CsvTable cells = parse_csv(read_text_file(ctx.run_dir / "sweep" / "medcore" / "cells.csv"));

  std::vector<std::string> problems;
  if (nh != 4 || nm != 4) problems.push_back("grid is not 4x4");
  if (cells.rows.size() != nh * nm) problems.push_back("cell count");
  std::map<std::pair<int, int>, std::array<double, 3>> cell;  // removed, bf1, hd95
  for (const auto& r : cells.rows) {
    cell[{std::stoi(r[cells.column("i")]), std::stoi(r[cells.column("j")])}] = {
        std::stod(r[cells.column("removed_params")]), std::stod(r[cells.column("bf1")]),
        std::stod(r[cells.column("hd95")])};
  }
  std::set<std::tuple<int, int, int>> seen;
  const std::int64_t total = Model::init(ctx.config.model, 0).params.parameter_count();
  int paired = 0, wins = 0;
  std::map<std::pair<int, int>, const StepRecord*> head_at, mlp_at;
  for (const auto& s : steps) {
    const bool head = s.family == GroupKind::head;
    seen.insert({head ? 0 : 1, s.i, s.j});
    const auto a = cell.at({s.i, s.j});
    const auto b = cell.at(head ? std::pair{s.i + 1, s.j} : std::pair{s.i, s.j + 1});
    if (s.dc_params != static_cast<std::int64_t>(b[0] - a[0])) problems.push_back("dC mismatch");
    if (s.valid != (s.dc_params > 0)) problems.push_back("valid flag");
    if (!close(s.dc_pct, 100.0 * static_cast<double>(s.dc_params) / static_cast<double>(total))) problems.push_back("dC%");
    if (s.valid) {
      if (!close(s.bf1_density, (a[1] - b[1]) / s.dc_pct, 1e-8)) problems.push_back("bf1 density");
      if (!close(s.hd95_density, (b[2] - a[2]) / s.dc_pct, 1e-8)) problems.push_back("hd95 density");
    } else if (!std::isnan(s.lev_p95) || !std::isnan(s.bf1_density)) {
      problems.push_back("invalid step carries statistics");
    }
    (head ? head_at : mlp_at)[{s.i, s.j}] = &s;
  }
  const std::size_t expected = (nh - 1) * nm + nh * (nm - 1);
  if (steps.size() != expected || seen.size() != expected) problems.push_back("step coverage");
  for (const auto& [ij, h] : head_at) {
    auto it = mlp_at.find(ij);
    if (it == mlp_at.end() || !h->valid || !it->second->valid) continue;
    ++paired;
    wins += h->lev_p95 > it->second->lev_p95;
  }
  const SweepSummary sum = summarize_steps(steps);
  if (sum.paired != paired || sum.wins != wins) problems.push_back("win count");

  const auto report = nlohmann::json::parse(read_text_file(ctx.run_dir / "report" / "medcore" / "report.json"));
  if (!report.contains("paper_reference") || report["paper_reference"]["blr95"].get<double>() != 2.887) {
    problems.push_back("reference annotation missing");
  }
  const double blr = report["sweep_summary"]["blr95"].is_number() ? report["sweep_summary"]["blr95"].get<double>()
                                                                  : std::nan("");
  std::string detail = std::to_string(steps.size()) + " step records (" + std::to_string(sum.head_valid) + "/" +
                       std::to_string(sum.head_total) + " head, " + std::to_string(sum.mlp_valid) + "/" +
                       std::to_string(sum.mlp_total) + " MLP valid), win rate " + std::to_string(wins) + "/" +
                       std::to_string(paired) + ", BLR95 " + fmt(blr) + " (heads " +
                       (blr > 1 ? "more" : "less") + " leveraged; reference 2.887, not asserted)";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

std::map<std::string, std::string> tree_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    out[fs::relative(e.path(), root).generic_string()] = read_text_file(e.path());
  }
  return out;
}

Outcome determinism(const Workspace& ws) {
  ExperimentConfig c = parse_config(R"({
    "run_id": "determinism",
    "model": {"embed_dim": 16, "num_blocks": 2, "heads": 2, "mlp_hidden": 8},
    "data": {"calib_per_distribution": 4, "heldout": 8, "base_heldout": 8},
    "train": {"base": {"steps": 20, "batch_size": 2}, "adapt": {"steps": 10, "batch_size": 2},
              "recover": {"steps": 10, "batch_size": 2}},
    "prune": {"head_sparsity": 0.5, "mlp_sparsity": 0.5},
    "sweep": {"h_list": [0.0, 0.5], "m_list": [0.25, 0.5]}
  })", "determinism");
  std::vector<std::map<std::string, std::string>> trees;
  for (const char* name : {"determinism_a", "determinism_b"}) {
    const RunContext ctx = run_context(ws, c, name);
    fs::remove_all(ctx.run_dir);
    cmd_pipeline(ctx);
    run_command("sweep", ctx);
    trees.push_back(tree_files(ctx.run_dir));
  }
  std::vector<std::string> differ;
  for (const auto& [name, bytes] : trees[0]) {
    auto it = trees[1].find(name);
    if (it == trees[1].end() || it->second != bytes) differ.push_back(name);
  }
  if (trees[0].size() != trees[1].size()) differ.push_back("(file sets differ)");
  const bool has_key = trees[0].count("score/medcore/scores.csv") && trees[0].count("evaluate/medcore/metrics.csv");
  std::string detail = std::to_string(trees[0].size()) + " files compared byte for byte (manifests excluded)";
  if (!has_key) detail += "; score table or metrics missing";
  for (const auto& d : differ) detail += "; differs: " + d;
  return {differ.empty() && has_key, detail};
}

double rel_gap(double a, double b) { return std::abs(a - b) / std::max({1e-300, std::abs(a), std::abs(b)}); }

Outcome ablation_wiring(const Workspace& ws) {
  const ExperimentConfig c = ordering_config(0);
  const RunContext ctx = run_context(ws, c, "seed0");
  ensure_stages(ctx, {{"train-base", "train-base"}, {"adapt", "adapt"}, {"calibrate", "calibrate"}});
  const Model adapted = Model::wrap(c.model, load_checkpoint(ctx.run_dir / "adapt" / "adapted.ckpt"));
  const ParamStore base = load_checkpoint(ctx.run_dir / "train-base" / "base.ckpt");
  const DataSets data = make_datasets(c);
  const ScoringContext sctx{&adapted, &base, data.calib, c.losses, {}};
  FisherCache cache(sctx, c.prune.eps_f);
  const FisherSet bd = load_fisher_set(ctx.run_dir / "calibrate" / "fisher_boundary.bin", RiskLoss::boundary);
  const FisherSet sg = load_fisher_set(ctx.run_dir / "calibrate" / "fisher_seg.bin", RiskLoss::seg);
  cache.put(bd);
  cache.put(sg);

  auto table = [&](Scorer s) {
    PruneConfig p = c.prune;
    p.scorer = s;
    return score_groups(p, cache);
  };
  const ScoreTable full = table(Scorer::medcore), no_reset = table(Scorer::no_reset),
                   no_var = table(Scorer::no_variance), no_bd = table(Scorer::no_boundary);
  const std::size_t R = bd.adapted.size();
  const std::vector<double> pi(R, 1.0 / static_cast<double>(R));
  const double alpha = c.prune.alpha_default, beta = c.prune.beta;

  // Direct recomposition from the stored maps.
  auto expected = [&](const FisherSet& set, const Group& g, double a, double b) {
    std::vector<double> q(R);
    double qbar = 0;
    for (std::size_t r = 0; r < R; ++r) {
      double zero = 0, reset = 0;
      for (const auto& sl : g.members) {
        const Tensor& th = adapted.params.at(sl.tensor);
        const Tensor& ts = base.at(sl.tensor);
        const Tensor& fm = set.adapted[r].values.at(sl.tensor);
        const Tensor& fx = set.cross[r].values.at(sl.tensor);
        for_each_element(th, sl, [&](std::size_t i) {
          zero += 0.5 * fm[i] * th[i] * th[i];
          reset += 0.5 * fx[i] * (th[i] - ts[i]) * (th[i] - ts[i]);
        });
      }
      q[r] = a * zero + (1 - a) * reset;
      qbar += pi[r] * q[r];
    }
    double var = 0;
    for (std::size_t r = 0; r < R; ++r) var += pi[r] * (q[r] - qbar) * (q[r] - qbar);
    return qbar + b * var;
  };
  double worst = 0;
  int reset_nonzero = 0;
  for (const auto& g : adapted.catalog.groups()) {
    const double e_full = expected(bd, g, alpha, beta);
    worst = std::max(worst, rel_gap(full.rows[g.id].q_dist, e_full));
    worst = std::max(worst, rel_gap(no_reset.rows[g.id].q_dist, expected(bd, g, 1.0, beta)));
    worst = std::max(worst, rel_gap(no_var.rows[g.id].q_dist, expected(bd, g, alpha, 0.0)));
    worst = std::max(worst, rel_gap(no_bd.rows[g.id].q_dist, expected(sg, g, alpha, beta)));
    for (std::size_t r = 0; r < R; ++r) {
      worst = std::max(worst, rel_gap(no_reset.rows[g.id].q[r], no_reset.rows[g.id].zero[r]));
      reset_nonzero += full.rows[g.id].reset[r] > 0;
    }
    worst = std::max(worst, rel_gap(no_reset.rows[g.id].priority,
                                    no_reset.rows[g.id].q_dist / (static_cast<double>(g.cost) + c.prune.eps)));
  }
  // The seg maps must be the plain segmentation-loss Fisher.
  const FisherMap fresh = estimate_fisher(adapted, data.calib[0], RiskLoss::seg, c.losses);
  double fisher_gap = 0;
  for (const auto& [name, t] : fresh.values.entries()) {
    const Tensor& stored = sg.adapted[0].values.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) fisher_gap = std::max(fisher_gap, rel_gap(t[i], stored[i]));
  }
  const bool distinct = worst < 1e-12 && reset_nonzero > 0;
  return {distinct && fisher_gap < 1e-12,
          "max relative gap to recomposed scores " + fmt(worst) + " (no-reset: alpha=1, no-variance: beta=0, "
          "no-boundary: seg Fisher), seg Fisher vs fresh estimate " + fmt(fisher_gap) + ", nonzero reset terms " +
              std::to_string(reset_nonzero)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = "acceptance_runs";
  bool verbose = false, fresh = false;
  app.add_option("--only", only, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--work-dir", work, "Directory for pipeline runs");
  app.add_flag("--fresh", fresh, "Delete cached pipeline runs first");
  app.add_flag("-v,--verbose", verbose, "Stage progress output");
  CLI11_PARSE(app, argc, argv);

  Workspace ws{fs::absolute(work), verbose};
  if (fresh) fs::remove_all(ws.root);
  fs::create_directories(ws.root);
  g_log = &std::cout;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"Fisher faithfulness", fisher_faithfulness},
      {"displacement theorem", theorem_verification},
      {"removal equivalence", removal_equivalence},
      {"reset-score localization", reset_localization},
      {"plateau behavior", plateau_behavior},
      {"baseline ordering", [&] { return baseline_ordering(ws); }},
      {"sweep machinery", [&] { return sweep_machinery(ws); }},
      {"determinism", [&] { return determinism(ws); }},
      {"ablation wiring", [&] { return ablation_wiring(ws); }},
  };
  std::vector<std::string> summary;
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int n = static_cast<int>(k) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    std::cout << "[" << n << "] " << criteria[k].first << " ..." << std::endl;
    Outcome o;
    Timer timer;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + " [" + std::to_string(n) + "] " +
                             criteria[k].first + ": " + o.detail + " (" + fmt(timer.seconds(), 3) + " s)";
    std::cout << line << std::endl;
    summary.push_back(line);
    failed += !o.pass;
  }
  std::cout << "\nSummary\n";
  for (const auto& l : summary) std::cout << l << "\n";
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}

#include "medcore_harness/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"
#include "medcore/checkpoint.hpp"
#include "medcore/csv.hpp"
#include "medcore/error.hpp"
#include "medcore/fisher.hpp"
#include "medcore/leverage.hpp"
#include "medcore/stats.hpp"
#include "medcore/surgery.hpp"
#include "medcore_harness/manifest.hpp"

namespace medcore::harness {

namespace fs = std::filesystem;
using ordered = nlohmann::ordered_json;

namespace {

void say(const RunContext& ctx, const std::string& msg) {
  if (ctx.log != nullptr) *ctx.log << msg << '\n' << std::flush;
}

std::string num(double v) { return format_double(v); }

// Writes one command's outputs into its stage directory and finishes with a
// manifest. Inputs are checked for existence up front.
class Stage {
 public:
  Stage(const RunContext& ctx, std::string command, const fs::path& rel_dir)
      : ctx_(ctx),
        command_(std::move(command)),
        dir_(ctx.run_dir / rel_dir),
        resolved_(resolved_config_json(ctx.config)),
        manifest_(command_, ctx.config.run_id, sha256_hex(resolved_), ctx.run_dir) {
    claim_run_dir();
    fs::create_directories(dir_);
    say(ctx_, "[" + command_ + "] writing " + dir_.string());
  }

  const fs::path& dir() const { return dir_; }

  fs::path input(const fs::path& rel, const std::string& producer) {
    const fs::path p = ctx_.run_dir / rel;
    if (!fs::exists(p)) {
      throw IoError("missing artifact " + p.string() + "; run `medcore " + producer + "` first");
    }
    manifest_.input(p);
    return p;
  }
  bool has_input(const fs::path& rel) const { return fs::exists(ctx_.run_dir / rel); }

  fs::path output(const std::string& name) {
    const fs::path p = dir_ / name;
    manifest_.output(p);
    return p;
  }
  void text(const std::string& name, const std::string& content) { write_text_file(output(name), content); }
  void json(const std::string& name, const ordered& doc) { text(name, doc.dump(2) + "\n"); }

  void finish() {
    text("resolved_config.json", resolved_);
    manifest_.write(dir_ / "manifest.json");
    say(ctx_, "[" + command_ + "] done");
  }

 private:
  void claim_run_dir() {
    const fs::path marker = ctx_.run_dir / "run.json";
    const std::string identity = run_identity(ctx_.config);
    if (fs::exists(marker)) {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(read_text_file(marker));
      } catch (const nlohmann::json::exception& e) {
        throw IoError("unreadable " + marker.string() + ": " + e.what());
      }
      if (doc.value("run_id", "") != ctx_.config.run_id || doc.value("identity_sha256", "") != identity) {
        throw IoError("run directory " + ctx_.run_dir.string() + " belongs to another run (run_id '" +
                      doc.value("run_id", "") + "'); choose a different --out");
      }
      return;
    }
    write_text_file(marker, ordered{{"run_id", ctx_.config.run_id}, {"identity_sha256", identity}}.dump(2) + "\n");
  }

  const RunContext& ctx_;
  std::string command_;
  fs::path dir_;
  std::string resolved_;
  Manifest manifest_;
};

fs::path scorer_dir(const char* stage, const ExperimentConfig& c) { return fs::path(stage) / scorer_name(c.prune.scorer); }

Model load_model(Stage& st, const ExperimentConfig& c, const fs::path& rel, const std::string& producer) {
  return Model::wrap(c.model, load_checkpoint(st.input(rel, producer)));
}

TrainConfig with_progress(TrainConfig t, const RunContext& ctx, const std::string& what) {
  if (ctx.log != nullptr) {
    const int total = t.steps;
    t.on_log = [&ctx, what, total](const LossPoint& p) {
      say(ctx, "  " + what + " step " + std::to_string(p.step + 1) + "/" + std::to_string(total) + " loss " +
                   num(p.loss));
    };
  }
  return t;
}

ordered metrics_json(const MetricReport& r) {
  return ordered{{"dice", r.dice}, {"iou", r.iou}, {"bf1", r.bf1}, {"hd95", r.hd95}, {"hd95_degenerate", r.degenerate}};
}

struct Calibrated {
  Model adapted;
  ParamStore base;
  DataSets data;
};

// Loads both checkpoints and the calibration data the Fisher files were built from.
Calibrated load_calibrated(Stage& st, const ExperimentConfig& c) {
  Calibrated out{load_model(st, c, "adapt/adapted.ckpt", "adapt"), load_checkpoint(st.input("train-base/base.ckpt", "train-base")),
                 make_datasets(c)};
  out.adapted.params.require_aligned(out.base, "base vs adapted checkpoint");
  return out;
}

void load_fisher_sets(Stage& st, FisherCache& cache) {
  cache.put(load_fisher_set(st.input("calibrate/fisher_boundary.bin", "calibrate"), RiskLoss::boundary));
  cache.put(load_fisher_set(st.input("calibrate/fisher_seg.bin", "calibrate"), RiskLoss::seg));
}

PruneConfig effective_prune(const ExperimentConfig& c) {
  PruneConfig p = c.prune;
  p.seed = derive_seed(c.seed, SeedStream::random_scorer);
  return p;
}

ordered plan_json(const PruningPlan& plan, const ScoreTable& scores, const Model& model, const PruneConfig& p) {
  auto labels = [&](const std::vector<std::size_t>& ids) {
    ordered arr = ordered::array();
    for (auto id : ids) arr.push_back(model.catalog.at(id).label());
    return arr;
  };
  const GroupMask mask = plan.mask(model.catalog);
  const std::int64_t total = model.params.parameter_count();
  const std::int64_t encoder = model.params.parameter_count(ParamRole::encoder);
  const std::int64_t removed = plan.removed_cost(model.catalog);
  const std::int64_t flops = estimate_flops(model.config, model.params, model.catalog);
  const std::int64_t flops_after = estimate_flops(model.config, model.params, model.catalog, mask);
  return ordered{
      {"scorer", scorer_name(scores.scorer)},
      {"head_sparsity", p.head_sparsity},
      {"mlp_sparsity", p.mlp_sparsity},
      {"protected_blocks", plan.protected_blocks},
      {"head_quotas", plan.head_budget.quotas},
      {"heads_requested", plan.head_budget.requested},
      {"heads_achieved", plan.head_budget.achieved},
      {"mlps_requested", plan.requested_mlps},
      {"mlps_achieved", plan.mlps.size()},
      {"flagged", plan.flagged()},
      {"heads", labels(plan.heads)},
      {"mlps", labels(plan.mlps)},
      {"second_heads", labels(plan.second_heads)},
      {"second_mlps", labels(plan.second_mlps)},
      {"params_before", total},
      {"params_removed", removed},
      {"params_after", total - removed},
      {"removed_pct", 100.0 * static_cast<double>(removed) / static_cast<double>(total)},
      {"encoder_params_before", encoder},
      {"encoder_removed_pct", 100.0 * static_cast<double>(removed) / static_cast<double>(encoder)},
      {"flops_before", flops},
      {"flops_after", flops_after},
      {"flops_removed_pct", 100.0 * static_cast<double>(flops - flops_after) / static_cast<double>(flops)},
  };
}

}  // namespace

// --- identity and data ---------------------------------------------------------

std::string run_identity(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.prune.scorer = Scorer::medcore;
  c.sweep.h_list = SweepConfig{}.h_list;
  c.sweep.m_list = SweepConfig{}.m_list;
  return sha256_hex(resolved_config_json(c));
}

DataSets make_datasets(const ExperimentConfig& config) {
  const int size = config.model.image_size;
  DataSets d;
  const std::uint64_t calib_seed = derive_seed(config.seed, SeedStream::calibration);
  for (const auto& spec : config.data.adapted) {
    d.calib.push_back(generate(spec, calib_seed, config.data.calib_per_distribution, size));
    d.calib_pooled.insert(d.calib_pooled.end(), d.calib.back().begin(), d.calib.back().end());
  }
  const MixtureSource mix(config.data.adapted, derive_seed(config.seed, SeedStream::heldout), size);
  d.heldout = mix.take(0, config.data.heldout);
  d.base_heldout = generate(config.data.base, derive_seed(config.seed, SeedStream::base_heldout),
                            config.data.base_heldout, size);
  return d;
}

SampleStream base_stream(const ExperimentConfig& config) {
  const DistributionSpec spec = config.data.base;
  const std::uint64_t seed = derive_seed(config.seed, SeedStream::base_data);
  const int size = config.model.image_size;
  return [spec, seed, size](std::int64_t i) { return generate_one(spec, seed, i, size); };
}

SampleStream adapt_stream(const ExperimentConfig& config) {
  auto mix = std::make_shared<MixtureSource>(config.data.adapted, derive_seed(config.seed, SeedStream::adapt_data),
                                             config.model.image_size);
  return [mix](std::int64_t i) { return mix->sample(i); };
}

// --- reusable steps ------------------------------------------------------------

PlannedPrune plan_pruning(const ExperimentConfig& config, const Model& adapted, const ParamStore& base,
                          const DataSets& data, FisherCache& cache, std::ostream* log) {
  const PruneConfig pc = effective_prune(config);
  PlannedPrune out;
  out.params = adapted.params;
  out.scores = score_groups(pc, cache);
  const bool interleave = config.train.interleaved_steps > 0 && pc.head_sparsity > 0;
  MlpRescoreFn rescore;
  if (pc.rescore_mlp || interleave) {
    rescore = [&](const GroupMask& head_mask) {
      if (interleave) {
        TrainConfig rc = config.train.recover;
        rc.steps = config.train.interleaved_steps;
        if (log != nullptr) *log << "  interleaved recovery: " << rc.steps << " steps\n";
        out.params = recover(adapted, adapted, adapt_stream(config), config.losses, rc, head_mask).params;
      }
      if (!pc.rescore_mlp) return out.scores;
      const Model current{adapted.config, out.params, adapted.catalog};
      const ScoringContext sctx{&current, &base, data.calib, config.losses, head_mask};
      FisherCache masked(sctx, pc.eps_f);
      return score_groups(pc, masked);
    };
  }
  out.plan = plan_cascade(pc, out.scores, adapted.catalog, rescore);
  return out;
}

BoundaryErrorFn budget_error_fn(const Model& model, const ScoreTable& scores, const PruneConfig& prune,
                                const std::vector<Sample>& heldout, double bf1_tol) {
  const auto protected_blocks = prune.resolved_protected(model.catalog.num_blocks());
  auto unprotected = [&](GroupKind kind) {
    std::int64_t n = 0, cost = 0;
    for (const auto& g : model.catalog.groups()) {
      if (g.kind != kind || std::count(protected_blocks.begin(), protected_blocks.end(), g.block)) continue;
      ++n;
      cost = g.cost;
    }
    return std::pair<std::int64_t, std::int64_t>{n, cost};
  };
  const auto [n_heads, head_cost] = unprotected(GroupKind::head);
  const auto [n_mlps, mlp_cost] = unprotected(GroupKind::mlp);
  const double total = static_cast<double>(model.params.parameter_count());
  return [=, &model, &heldout](double c_h, double c_m) {
    PruneConfig p = prune;
    p.mode = PruneMode::one_time;
    p.rescore_mlp = false;
    const double heads = std::round(c_h / 100.0 * total / static_cast<double>(head_cost));
    const double mlps = std::round(c_m / 100.0 * total / static_cast<double>(mlp_cost));
    p.head_sparsity = std::min(heads / static_cast<double>(n_heads), 0.999999);
    p.mlp_sparsity = std::min(mlps / static_cast<double>(n_mlps), 0.999999);
    const PruningPlan plan = plan_cascade(p, scores, model.catalog);
    return 1.0 - evaluate_model(model, heldout, plan.mask(model.catalog), bf1_tol).bf1;
  };
}

// --- commands ------------------------------------------------------------------

void cmd_train_base(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "train-base", "train-base");
  const Model init = Model::init(c.model, derive_seed(c.seed, SeedStream::model_init));
  const TrainResult r = train(init, base_stream(c), with_progress(c.train.base, ctx, "base"), c.losses);
  const Model trained = Model::wrap(c.model, r.params);
  const MetricReport m = evaluate_model(trained, make_datasets(c).base_heldout, {}, c.eval.bf1_tol);
  save_checkpoint(st.output("base.ckpt"), r.params);
  st.text("loss_curve.csv", loss_curve_csv(r.curve));
  ordered doc = metrics_json(m);
  doc["base_dice_min"] = c.eval.base_dice_min;
  doc["meets_threshold"] = m.dice >= c.eval.base_dice_min;
  st.json("metrics.json", doc);
  say(ctx, "  base held-out Dice " + num(m.dice) + (m.dice >= c.eval.base_dice_min ? "" : " (below threshold)"));
  st.finish();
}

void cmd_adapt(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "adapt", "adapt");
  const Model base = load_model(st, c, "train-base/base.ckpt", "train-base");
  const TrainResult r = adapt(base, adapt_stream(c), with_progress(c.train.adapt, ctx, "adapt"), c.losses);
  const Model adapted = Model::wrap(c.model, r.params);
  const auto held = make_datasets(c).heldout;
  const MetricReport mb = evaluate_model(base, held, {}, c.eval.bf1_tol);
  const MetricReport ma = evaluate_model(adapted, held, {}, c.eval.bf1_tol);
  save_checkpoint(st.output("adapted.ckpt"), r.params);
  st.text("loss_curve.csv", loss_curve_csv(r.curve));
  st.json("metrics.json", ordered{{"base_on_adapted_task", metrics_json(mb)},
                                  {"adapted_on_adapted_task", metrics_json(ma)},
                                  {"dice_gain", ma.dice - mb.dice},
                                  {"adapt_gain_min", c.eval.adapt_gain_min},
                                  {"meets_threshold", ma.dice - mb.dice >= c.eval.adapt_gain_min}});
  say(ctx, "  adapted-task Dice: base " + num(mb.dice) + ", adapted " + num(ma.dice));
  st.finish();
}

void cmd_calibrate(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "calibrate", "calibrate");
  const Calibrated in = load_calibrated(st, c);
  const ScoringContext sctx{&in.adapted, &in.base, in.data.calib, c.losses, {}};
  ordered summary;
  summary["samples_per_distribution"] = c.data.calib_per_distribution;
  summary["distributions"] = in.data.calib.size();
  const auto pi = c.prune.resolved_pi(in.data.calib.size());
  for (RiskLoss loss : {RiskLoss::boundary, RiskLoss::seg}) {
    const char* name = loss == RiskLoss::boundary ? "boundary" : "seg";
    say(ctx, std::string("  Fisher maps for the ") + name + " loss");
    const FisherSet set = estimate_fisher_set(sctx, loss, c.prune.eps_f);
    save_fisher_set(st.output(std::string("fisher_") + name + ".bin"), set);
    summary[std::string("block_sensitivity_") + name] = block_sensitivity(set, pi, c.model.num_blocks);
  }
  st.json("calibration.json", summary);
  st.finish();
}

void cmd_score(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "score", scorer_dir("score", c));
  const Calibrated in = load_calibrated(st, c);
  const ScoringContext sctx{&in.adapted, &in.base, in.data.calib, c.losses, {}};
  FisherCache cache(sctx, c.prune.eps_f);
  load_fisher_sets(st, cache);
  const ScoreTable t = score_groups(effective_prune(c), cache);
  st.text("scores.csv", score_table_csv(t, nullptr, c.prune.resolved_pi(in.data.calib.size())));
  st.finish();
}

void cmd_prune(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "prune", scorer_dir("prune", c));
  const Calibrated in = load_calibrated(st, c);
  const ScoringContext sctx{&in.adapted, &in.base, in.data.calib, c.losses, {}};
  FisherCache cache(sctx, c.prune.eps_f);
  load_fisher_sets(st, cache);
  const PlannedPrune pp = plan_pruning(c, in.adapted, in.base, in.data, cache, ctx.log);
  const auto pi = c.prune.resolved_pi(in.data.calib.size());
  const Model masked{c.model, pp.params, in.adapted.catalog};
  const RemovalResult removed = physically_remove(pp.params, c.model, in.adapted.catalog, pp.plan.mask(in.adapted.catalog));
  st.text("plan.csv", score_table_csv(pp.scores, &pp.plan, pi));
  if (pp.plan.mlp_scores) st.text("mlp_rescored.csv", score_table_csv(*pp.plan.mlp_scores, &pp.plan, pi));
  ordered doc = plan_json(pp.plan, pp.scores, masked, c.prune);
  doc["removed_model_params"] = removed.params.parameter_count();
  st.json("plan.json", doc);
  save_checkpoint(st.output("pruned.ckpt"), removed.params);
  say(ctx, "  removed " + num(doc["removed_pct"].get<double>()) + "% of parameters");
  st.finish();
}

void cmd_recover(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "recover", scorer_dir("recover", c));
  const Model teacher = load_model(st, c, "adapt/adapted.ckpt", "adapt");
  const Model pruned = load_model(st, c, scorer_dir("prune", c) / "pruned.ckpt", "prune");
  const TrainResult r =
      recover(pruned, teacher, adapt_stream(c), c.losses, with_progress(c.train.recover, ctx, "recover"));
  save_checkpoint(st.output("recovered.ckpt"), r.params);
  st.text("loss_curve.csv", loss_curve_csv(r.curve));
  st.finish();
}

void cmd_evaluate(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "evaluate", scorer_dir("evaluate", c));
  const fs::path prune_dir = scorer_dir("prune", c);
  const std::vector<std::pair<std::string, Model>> variants = {
      {"unpruned", load_model(st, c, "adapt/adapted.ckpt", "adapt")},
      {"pruned-no-recovery", load_model(st, c, prune_dir / "pruned.ckpt", "prune")},
      {"pruned+recovery", load_model(st, c, scorer_dir("recover", c) / "recovered.ckpt", "recover")},
  };
  const auto held = make_datasets(c).heldout;
  CsvWriter w({"variant", "params", "encoder_params", "flops", "dice", "iou", "bf1", "hd95", "hd95_degenerate"});
  for (const auto& [name, m] : variants) {
    const MetricReport r = evaluate_model(m, held, {}, c.eval.bf1_tol);
    w.row({name, std::to_string(m.params.parameter_count()),
           std::to_string(m.params.parameter_count(ParamRole::encoder)),
           std::to_string(estimate_flops(m.config, m.params, m.catalog)), num(r.dice), num(r.iou), num(r.bf1),
           num(r.hd95), std::to_string(r.degenerate)});
    say(ctx, "  " + name + ": Dice " + num(r.dice) + ", BF1 " + num(r.bf1) + ", HD95 " + num(r.hd95));
  }
  st.text("metrics.csv", w.str());
  st.finish();
}

void cmd_sweep(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "sweep", scorer_dir("sweep", c));
  const Calibrated in = load_calibrated(st, c);
  const ScoringContext sctx{&in.adapted, &in.base, in.data.calib, c.losses, {}};
  FisherCache cache(sctx, c.prune.eps_f);
  load_fisher_sets(st, cache);
  SweepInputs si;
  si.model = &in.adapted;
  si.prune = effective_prune(c);
  si.scores = score_groups(si.prune, cache);
  si.calib = in.data.calib_pooled;
  si.heldout = in.data.heldout;
  const SweepResult r = run_sweep(si, c.sweep);
  st.text("steps.csv", step_records_csv(r.steps));
  st.text("cells.csv", cell_records_csv(r.cells));
  const SweepSummary& s = r.summary;
  st.json("summary.json", ordered{{"head_lev95", s.head_lev95},
                                  {"mlp_lev95", s.mlp_lev95},
                                  {"blr95", s.blr95},
                                  {"rlr", s.rlr},
                                  {"bsr", s.bsr},
                                  {"paired", s.paired},
                                  {"wins", s.wins},
                                  {"win_rate", s.win_rate},
                                  {"median_paired_diff", s.median_paired_diff}});
  if (c.probe.enabled) {
    const PruneConfig probe_cfg = si.prune;
    PruneConfig centre = probe_cfg;
    centre.mode = PruneMode::one_time;
    centre.rescore_mlp = false;
    centre.head_sparsity = c.probe.h;
    centre.mlp_sparsity = c.probe.m;
    const PruningPlan plan = plan_cascade(centre, si.scores, in.adapted.catalog);
    const double total = static_cast<double>(in.adapted.params.parameter_count());
    double c_h = 0, c_m = 0;
    for (auto id : plan.removed()) {
      const Group& g = in.adapted.catalog.at(id);
      (g.kind == GroupKind::head ? c_h : c_m) += 100.0 * static_cast<double>(g.cost) / total;
    }
    ordered doc{{"c_head_pct", c_h}, {"c_mlp_pct", c_m}, {"eta", c.probe.eta}};
    try {
      const BudgetProbe p = budget_rule_probe(budget_error_fn(in.adapted, si.scores, probe_cfg, in.data.heldout,
                                                              c.sweep.bf1_tol),
                                              c_h, c_m, c.probe.eta);
      doc["d_error_d_head"] = p.d_head;
      doc["d_error_d_mlp"] = p.d_mlp;
      doc["shift_delta"] = p.shift_delta;
      doc["shift_head_to_mlp_beneficial"] = p.shift_beneficial;
    } catch (const InfeasiblePlanError& e) {
      doc["error"] = e.what();
    }
    st.json("budget_probe.json", doc);
  }
  say(ctx, "  BLR95 " + num(s.blr95) + ", paired wins " + std::to_string(s.wins) + "/" + std::to_string(s.paired));
  st.finish();
}

void cmd_theorem_check(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "theorem-check", "theorem-check");
  const TheoremReport r = theorem_check({FieldFamily::linear, FieldFamily::circle, FieldFamily::ellipse, FieldFamily::wavy},
                                        c.theorem.amplitude, c.theorem.scales, c.theorem.size);
  st.text("theorem.csv", r.csv());
  st.json("summary.json",
          ordered{{"median_ratio", r.median_ratio}, {"linear_max_residual", r.linear_max_residual}});
  say(ctx, "  median residual ratio " + num(r.median_ratio) + ", linear residual " + num(r.linear_max_residual));
  st.finish();
}

void cmd_oracle_compare(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "oracle-compare", scorer_dir("oracle-compare", c));
  const Calibrated in = load_calibrated(st, c);
  const bool seg = c.prune.scorer == Scorer::no_boundary || c.prune.scorer == Scorer::vanilla_fisher;
  const RiskLoss loss = seg ? RiskLoss::seg : RiskLoss::boundary;
  const FisherSet set =
      load_fisher_set(st.input(seg ? "calibrate/fisher_seg.bin" : "calibrate/fisher_boundary.bin", "calibrate"), loss);
  const FisherMap cross = cross_fisher(set.pooled_adapted, set.base, c.prune.eps_f);
  const auto az = approx_zero_cost(set.pooled_adapted, in.adapted.params, in.adapted.catalog);
  const auto ar = approx_reset_cost(cross, in.adapted.params, in.base, in.adapted.catalog);
  const auto heads = in.adapted.catalog.ids(GroupKind::head);
  say(ctx, "  exact interventions for " + std::to_string(heads.size()) + " heads");
  const auto ez = exact_intervention_sweep(in.adapted, in.base, in.data.calib_pooled, Intervention::zero, loss, c.losses, heads);
  const auto er = exact_intervention_sweep(in.adapted, in.base, in.data.calib_pooled, Intervention::reset, loss, c.losses, heads);
  CsvWriter w({"group_id", "label", "approx_zero", "exact_zero", "approx_reset", "exact_reset"});
  std::vector<double> vaz, var, vez, ver;
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const std::size_t g = heads[k];
    vaz.push_back(az[g]);
    var.push_back(ar[g]);
    vez.push_back(ez[k]);
    ver.push_back(er[k]);
    w.row({std::to_string(g), in.adapted.catalog.at(g).label(), num(az[g]), num(ez[k]), num(ar[g]), num(er[k])});
  }
  st.text("compare.csv", w.str());
  const double sz = spearman(vaz, vez), sr = spearman(var, ver);
  st.json("summary.json", ordered{{"loss", seg ? "seg" : "boundary"},
                                  {"groups", heads.size()},
                                  {"spearman_zero", sz},
                                  {"spearman_reset", sr}});
  say(ctx, "  Spearman zero " + num(sz) + ", reset " + num(sr));
  st.finish();
}

void cmd_ablate(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "ablate", "ablate");
  const Calibrated in = load_calibrated(st, c);
  const ScoringContext sctx{&in.adapted, &in.base, in.data.calib, c.losses, {}};
  FisherCache cache(sctx, c.prune.eps_f);
  load_fisher_sets(st, cache);
  const auto pi = c.prune.resolved_pi(in.data.calib.size());
  const double total = static_cast<double>(in.adapted.params.parameter_count());
  const double encoder = static_cast<double>(in.adapted.params.parameter_count(ParamRole::encoder));
  CsvWriter w({"scorer", "params_removed", "removed_pct", "encoder_removed_pct", "flagged", "dice", "iou", "bf1", "hd95",
               "hd95_degenerate"});
  for (Scorer s : all_scorers()) {
    ExperimentConfig sc = c;
    sc.prune.scorer = s;
    sc.train.interleaved_steps = 0;
    const PlannedPrune pp = plan_pruning(sc, in.adapted, in.base, in.data, cache, ctx.log);
    st.text(std::string("scores_") + scorer_name(s) + ".csv", score_table_csv(pp.scores, &pp.plan, pi));
    const std::int64_t removed = pp.plan.removed_cost(in.adapted.catalog);
    const MetricReport r = evaluate_model(in.adapted, in.data.heldout, pp.plan.mask(in.adapted.catalog), c.eval.bf1_tol);
    w.row({scorer_name(s), std::to_string(removed), num(100.0 * static_cast<double>(removed) / total),
           num(100.0 * static_cast<double>(removed) / encoder), pp.plan.flagged() ? "1" : "0", num(r.dice), num(r.iou),
           num(r.bf1), num(r.hd95), std::to_string(r.degenerate)});
    say(ctx, std::string("  ") + scorer_name(s) + ": BF1 " + num(r.bf1) + ", Dice " + num(r.dice));
  }
  st.text("ablation.csv", w.str());
  st.finish();
}

void cmd_report(const RunContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  Stage st(ctx, "report", scorer_dir("report", c));
  const fs::path steps_path = st.input(scorer_dir("sweep", c) / "steps.csv", "sweep");
  const SweepSummary s = summarize_steps(parse_step_records(read_text_file(steps_path)));
  ordered doc;
  doc["sweep_summary"] = ordered{{"head_lev95", s.head_lev95},
                                 {"mlp_lev95", s.mlp_lev95},
                                 {"blr95", s.blr95},
                                 {"rlr", s.rlr},
                                 {"bsr", s.bsr},
                                 {"paired", s.paired},
                                 {"wins", s.wins},
                                 {"win_rate", s.win_rate},
                                 {"median_paired_diff", s.median_paired_diff},
                                 {"head_bf1_density", s.head_bf1_density},
                                 {"mlp_bf1_density", s.mlp_bf1_density},
                                 {"head_hd95_density", s.head_hd95_density},
                                 {"mlp_hd95_density", s.mlp_hd95_density},
                                 {"head_valid", s.head_valid},
                                 {"head_total", s.head_total},
                                 {"mlp_valid", s.mlp_valid},
                                 {"mlp_total", s.mlp_total},
                                 {"head_more_leveraged", s.head_lev95 > s.mlp_lev95}};
  // Reference annotation only; nothing is compared against it.
  doc["paper_reference"] = ordered{{"head_lev95", 3.961}, {"mlp_lev95", 1.372}, {"blr95", 2.887}, {"win_rate", "15/15"}};
  const fs::path eval_rel = scorer_dir("evaluate", c) / "metrics.csv";
  if (st.has_input(eval_rel)) {
    const CsvTable t = parse_csv(read_text_file(st.input(eval_rel, "evaluate")));
    ordered rows = ordered::array();
    for (const auto& row : t.rows) {
      ordered o;
      for (std::size_t k = 0; k < t.header.size(); ++k) o[t.header[k]] = row[k];
      rows.push_back(o);
    }
    doc["metrics"] = rows;
  }
  if (st.has_input("theorem-check/summary.json")) {
    doc["theorem_check"] = ordered::parse(read_text_file(st.input("theorem-check/summary.json", "theorem-check")));
  }
  st.json("report.json", doc);
  st.finish();
}

void cmd_pipeline(const RunContext& ctx) {
  cmd_train_base(ctx);
  cmd_adapt(ctx);
  cmd_calibrate(ctx);
  cmd_score(ctx);
  cmd_prune(ctx);
  cmd_recover(ctx);
  cmd_evaluate(ctx);
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"train-base", "adapt",         "calibrate",      "score",  "prune",
                                                 "recover",    "evaluate",      "sweep",          "theorem-check",
                                                 "oracle-compare", "ablate",    "report",         "pipeline"};
  return names;
}

void run_command(const std::string& name, const RunContext& ctx) {
  static const std::map<std::string, Command> table = {
      {"train-base", cmd_train_base}, {"adapt", cmd_adapt},   {"calibrate", cmd_calibrate},
      {"score", cmd_score},           {"prune", cmd_prune},   {"recover", cmd_recover},
      {"evaluate", cmd_evaluate},     {"sweep", cmd_sweep},   {"theorem-check", cmd_theorem_check},
      {"oracle-compare", cmd_oracle_compare}, {"ablate", cmd_ablate}, {"report", cmd_report},
      {"pipeline", cmd_pipeline}};
  auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown command '" + name + "'");
  it->second(ctx);
}

}  // namespace medcore::harness

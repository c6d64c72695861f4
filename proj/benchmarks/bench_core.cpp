#include <benchmark/benchmark.h>

#include "medcore/fisher.hpp"
#include "medcore/leverage.hpp"
#include "medcore/losses.hpp"
#include "medcore/model.hpp"
#include "medcore/planner.hpp"
#include "medcore/scoring.hpp"
#include "medcore/surgery.hpp"
#include "medcore/synthdata.hpp"

using namespace medcore;

namespace {

const Model& default_model() {
  static const Model m = Model::init(ModelConfig{}, 0);
  return m;
}

const Sample& default_sample() {
  static const Sample s = generate_one(default_adapted_specs()[0], 0, 0, ModelConfig{}.image_size);
  return s;
}

void BM_Forward(benchmark::State& state) {
  const Model& m = default_model();
  const Sample& s = default_sample();
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict_logits(m.params, m.config, m.catalog, {}, s.image, s.box));
  }
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const Model& m = default_model();
  const Sample& s = default_sample();
  const LossWeights w;
  for (auto _ : state) {
    Tape tape;
    const BoundParams p = bind_params(tape, m.params);
    const ModelOutput o = forward(tape, p, m.config, m.catalog, {}, s.image, s.box);
    const Var loss = boundary_loss(o.logits, s.mask, w);
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_FisherPerSample(benchmark::State& state) {
  const Model& m = default_model();
  const std::vector<Sample> calib = generate(default_adapted_specs()[0], 1, static_cast<int>(state.range(0)), 32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_fisher(m, calib, RiskLoss::boundary, LossWeights{}));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FisherPerSample)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_PlanCascade(benchmark::State& state) {
  const Model& m = default_model();
  const ScoreTable scores = baseline_scores(Scorer::magnitude, m.params, m.catalog, 0);
  PruneConfig pc;
  pc.head_sparsity = 0.5;
  pc.mlp_sparsity = 0.7;
  for (auto _ : state) benchmark::DoNotOptimize(plan_cascade(pc, scores, m.catalog));
}
BENCHMARK(BM_PlanCascade);

void BM_PhysicalRemoval(benchmark::State& state) {
  const Model& m = default_model();
  PruneConfig pc;
  pc.head_sparsity = 0.5;
  pc.mlp_sparsity = 0.7;
  const PruningPlan plan = plan_cascade(pc, baseline_scores(Scorer::magnitude, m.params, m.catalog, 0), m.catalog);
  const GroupMask mask = plan.mask(m.catalog);
  for (auto _ : state) benchmark::DoNotOptimize(physically_remove(m.params, m.config, m.catalog, mask));
}
BENCHMARK(BM_PhysicalRemoval);

void BM_TheoremCheck(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        theorem_check({FieldFamily::linear, FieldFamily::circle, FieldFamily::ellipse, FieldFamily::wavy}));
  }
}
BENCHMARK(BM_TheoremCheck)->Unit(benchmark::kMillisecond);

void BM_GenerateSample(benchmark::State& state) {
  const DistributionSpec spec = default_adapted_specs()[2];
  std::int64_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_one(spec, 0, i++, 32));
}
BENCHMARK(BM_GenerateSample);

}  // namespace

// libbenchmark_main.a in the distro package carries LTO bytecode that newer
// GCC point releases refuse to link, so provide main here.
BENCHMARK_MAIN();

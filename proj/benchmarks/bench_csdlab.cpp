#include <benchmark/benchmark.h>

#include "csdlab/distill.hpp"
#include "csdlab/presets.hpp"
#include "csdlab/runner.hpp"

using namespace csdlab;

static void BM_EpsPredGrid(benchmark::State& state) {
  const World w = make_world_preset("grid-2d");
  const DiffusionSchedule s;
  Rng rng(1);
  const Vec x = rng.normal_vec(2);
  for (auto _ : state) benchmark::DoNotOptimize(w.eps_pred(s, x, "middle", 0.4));
}
BENCHMARK(BM_EpsPredGrid);

static void BM_EpsPredUnconditionalGrid(benchmark::State& state) {
  const World w = make_world_preset("grid-2d");
  const DiffusionSchedule s;
  Rng rng(1);
  const Vec x = rng.normal_vec(2);
  for (auto _ : state) benchmark::DoNotOptimize(w.eps_pred(s, x, kUnconditional, 0.4));
}
BENCHMARK(BM_EpsPredUnconditionalGrid);

static void BM_RuleDelta(benchmark::State& state) {
  const auto kind = static_cast<RuleKind>(state.range(0));
  const World w = make_world_preset("grid-2d");
  const DiffusionSchedule s;
  RuleConfig r;
  r.kind = kind;
  r.prompt = "right";
  if (needs_neg_prompt(kind)) r.neg_prompt = "left";
  VsdSurrogate sur;
  Rng rng(2);
  std::vector<Vec> renders;
  for (int i = 0; i < 16; ++i) renders.push_back(rng.normal_vec(2));
  sur.fit("right", renders);
  const DdsReference ref{Vec::Zero(2), "left"};
  const Vec x = rng.normal_vec(2), e = rng.normal_vec(2);
  for (auto _ : state) benchmark::DoNotOptimize(rule_delta(r, {w, s, x, 0.4, e, 0.5, &sur, &ref}));
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_RuleDelta)->DenseRange(0, 7);

static void BM_Run(benchmark::State& state) {
  RuleConfig r;
  r.kind = RuleKind::SDS;
  r.prompt = "right";
  const RunConfig c{
      .world = make_world_preset("grid-2d"),
      .schedule = DiffusionSchedule(),
      .generator = Generator::random_orthonormal(2, 4, 3),
      .rule = r,
      .steps = state.range(0),
      .seed = 5,
  };
  for (auto _ : state) benchmark::DoNotOptimize(run(c));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Run)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

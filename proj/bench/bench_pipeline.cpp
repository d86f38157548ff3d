// Per-episode simulator cost and per-decision policy cost on the smoke grid.
#include <benchmark/benchmark.h>

#include "cross/control/harness.h"
#include "cross/model/cross_net.h"
#include "cross/autodiff/ops.h"

namespace {

using namespace cross;

void BM_episode_max_pressure(benchmark::State& state) {
  const auto sc = control::smoke_scenario();
  control::MaxPressure mp;
  for (auto _ : state) benchmark::DoNotOptimize(control::run_scenario(sc, mp, 1).queue_veh);
}

void BM_actor_forward(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.hidden = static_cast<std::size_t>(state.range(0));
  model::CrossNet actor(cfg, model::Role::Actor, 1);
  const auto sc = control::smoke_scenario();
  sim::Simulator s(std::make_shared<const sim::Network>(sc.network), {}, 10);
  std::vector<model::Observation> obs;
  for (int ix = 0; ix < 4; ++ix) obs.push_back(model::build_observation(s, ix));
  std::vector<const model::Observation*> ptrs;
  for (const auto& o : obs) ptrs.push_back(&o);
  const auto b = model::make_batch(ptrs, {}, cfg.hidden);
  ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(actor.forward(b).log_probs.data().data());
}

}  // namespace

BENCHMARK(BM_episode_max_pressure)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_actor_forward)->Arg(32)->Arg(128)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();

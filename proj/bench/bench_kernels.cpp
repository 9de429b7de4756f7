// OpenMP kernels against their serial references: summarize over distinct
// available-page sets, simulate_many over independent traces.

#include <benchmark/benchmark.h>

#include <random>

#include "deckforge/metrics.hpp"
#include "deckforge/runtime_sim.hpp"
#include "deckforge/synth.hpp"

using namespace deckforge;

namespace {

struct Fixture {
  ProgramModel model;
  InstrumentationPlan plan;
  DisjointLayout layout;
  PageGadgetIndex index;

  Fixture()
      : model(synth::random_model(2026, [] {
          synth::ModelParams p;
          p.functions = 400;
          p.max_sites_per_function = 6;
          return p;
        }())),
        plan(plan_instrumentation(model)),
        layout(build_layout(model, plan)),
        index(build_page_index(model, layout)) {}
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

Log random_log(std::size_t records) {
  const auto& f = fixture();
  std::mt19937_64 rng(7);
  Log log;
  for (std::size_t i = 0; i < records; ++i) {
    PageSet ap;
    for (std::uint64_t p = 0; p < f.index.pages.size(); ++p)
      if (std::bernoulli_distribution(0.3)(rng)) ap.push_back(p);
    log.push_back({i, ApiCall::Single, 0u, std::move(ap)});
  }
  return log;
}

std::vector<Trace> traces(std::size_t n) {
  std::vector<Trace> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth::random_trace(fixture().model, i, {2000, 12}));
  return out;
}

void BM_summarize(benchmark::State& state) {
  const Log log = random_log(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(summarize(fixture().index, log));
}

void BM_summarize_serial(benchmark::State& state) {
  const Log log = random_log(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(summarize_serial(fixture().index, log));
}

void BM_simulate_many(benchmark::State& state) {
  const auto ts = traces(static_cast<std::size_t>(state.range(0)));
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(simulate_many(f.model, f.plan, f.layout, ts));
}

void BM_simulate_many_serial(benchmark::State& state) {
  const auto ts = traces(static_cast<std::size_t>(state.range(0)));
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(simulate_many_serial(f.model, f.plan, f.layout, ts));
}

}  // namespace

BENCHMARK(BM_summarize)->Arg(256)->Arg(4096);
BENCHMARK(BM_summarize_serial)->Arg(256)->Arg(4096);
BENCHMARK(BM_simulate_many)->Arg(16)->Arg(64);
BENCHMARK(BM_simulate_many_serial)->Arg(16)->Arg(64);

BENCHMARK_MAIN();

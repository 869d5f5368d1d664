#include <benchmark/benchmark.h>

#include "taugen/engine.hpp"

using namespace taugen;

namespace {

// Full ancestral chain with the analytic predictor over n scalar latents.
void bench_oracle_chain(benchmark::State& state) {
    const int n = int(state.range(0));
    const NoiseSchedule s = default_desk_schedule();
    for (auto _ : state) {
        const OracleReport r = oracle_sampling_test(s, {0.0, 1.0}, n, 7);
        benchmark::DoNotOptimize(r.variance);
    }
    state.counters["draws/s"] = benchmark::Counter(
        double(n), benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

void bench_reverse_step(benchmark::State& state) {
    const NoiseSchedule s = default_desk_schedule();
    LatentGrid z = gaussian_like(LatentGrid(4, 8, 8, 4), RngState(1));
    LatentGrid eps = gaussian_like(z, RngState(2));
    LatentGrid noise = gaussian_like(z, RngState(3));
    for (auto _ : state) {
        z = reverse_step(z, eps, 100, s, noise);
        benchmark::DoNotOptimize(z.v.data());
    }
}

}  // namespace

BENCHMARK(bench_oracle_chain)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(bench_reverse_step);

BENCHMARK_MAIN();

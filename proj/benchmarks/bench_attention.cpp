#include <benchmark/benchmark.h>

#include "taugen/denoiser.hpp"
#include "taugen/rng.hpp"

using namespace taugen;
using namespace taugen::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
    RngState rng(seed);
    Tensor t(std::move(shape));
    for (double& x : t.v) x = rng.uniform(-1.0, 1.0);
    return t;
}

void bench_cross_attention(benchmark::State& state, Precision prec) {
    set_precision(prec);
    const int C = int(state.range(0));
    const int spatial = int(state.range(1));
    const int d = 32, M = 4, Dc = 64;

    const Tensor f = random_tensor({C, spatial, 8, 8}, 1);
    const PromptEmbedding c = encode_reference(3.65, M, Dc);
    const Tensor wq = random_tensor({C, d}, 2);
    const Tensor wk = random_tensor({Dc, d}, 3);
    const Tensor wv = random_tensor({Dc, d}, 4);
    const Tensor wo = random_tensor({d, C}, 5);

    for (auto _ : state) {
        const Tensor out = cross_attention(f, c, wq, wk, wv, wo);
        benchmark::DoNotOptimize(out.v.data());
    }
    state.counters["tokens"] = double(spatial) * 64;
}

}  // namespace

BENCHMARK_CAPTURE(bench_cross_attention, f32, Precision::f32)
    ->Args({16, 4})
    ->Args({32, 2})
    ->Args({32, 16});
BENCHMARK_CAPTURE(bench_cross_attention, f64, Precision::f64)->Args({16, 4});

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "taugen/nn/ops.hpp"
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

void bench_conv_forward(benchmark::State& state, Precision prec, int cin, int cout, int d, int h,
                        int w, int stride) {
    set_precision(prec);
    Var x = make_leaf(random_tensor({cin, d, h, w}, 1));
    Var k = make_leaf(random_tensor({cout, cin, 3, 3, 3}, 2));
    Var b = make_leaf(random_tensor({cout}, 3));
    for (auto _ : state) {
        Var y = conv3d(x, k, b, stride, 1);
        benchmark::DoNotOptimize(y->value.v.data());
    }
    const double macs = double(cout) * cin * 27 * (d / stride) * (h / stride) * (w / stride);
    state.counters["GFLOP/s"] =
        benchmark::Counter(2.0 * macs, benchmark::Counter::kIsIterationInvariantRate,
                           benchmark::Counter::kIs1000);
}

void bench_conv_train(benchmark::State& state, Precision prec, int cin, int cout, int d, int h,
                      int w) {
    set_precision(prec);
    Tensor xt = random_tensor({cin, d, h, w}, 1);
    for (auto _ : state) {
        Var x = make_leaf(xt, true, "x");
        Var k = make_leaf(random_tensor({cout, cin, 3, 3, 3}, 2), true, "k");
        Var b = make_leaf(random_tensor({cout}, 3), true, "b");
        Var loss = sum(conv3d(x, k, b, 1, 1));
        backward(loss);
        benchmark::DoNotOptimize(k->grad.v.data());
    }
}

}  // namespace

// Desk-profile autoencoder shapes.
BENCHMARK_CAPTURE(bench_conv_forward, stem_f32, Precision::f32, 1, 16, 16, 32, 32, 1);
BENCHMARK_CAPTURE(bench_conv_forward, block_full_f32, Precision::f32, 16, 16, 16, 32, 32, 1);
BENCHMARK_CAPTURE(bench_conv_forward, block_mid_f32, Precision::f32, 32, 32, 8, 16, 16, 1);
BENCHMARK_CAPTURE(bench_conv_forward, block_mid_f64, Precision::f64, 32, 32, 8, 16, 16, 1);
BENCHMARK_CAPTURE(bench_conv_forward, down_f32, Precision::f32, 16, 32, 16, 32, 32, 2);

BENCHMARK_CAPTURE(bench_conv_train, block_full_f32, Precision::f32, 16, 16, 16, 32, 32);
BENCHMARK_CAPTURE(bench_conv_train, block_mid_f32, Precision::f32, 32, 32, 8, 16, 16);

BENCHMARK_MAIN();

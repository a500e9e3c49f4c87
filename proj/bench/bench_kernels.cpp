#include <benchmark/benchmark.h>

#include "sefi/kernels.hpp"
#include "sefi/rng.hpp"
#include "sefi/tensor.hpp"

// Serial reference vs OpenMP fronts on the shapes that dominate a training
// step, plus larger grids where the parallel dispatch actually engages.

using namespace sefi;
namespace k = kernels;

namespace {

Tensor make(std::vector<int> shape, uint64_t seed) {
    Rng rng(seed);
    return rng.gaussian_tensor(std::move(shape), 1.0);
}

void bm_matmul_serial(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Tensor a = make({n, n}, 1), b = make({n, n}, 2), c({n, n});
    for (auto _ : state) {
        k::serial::matmul_nn(a.ptr(), b.ptr(), c.ptr(), n, n, n);
        benchmark::DoNotOptimize(c.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n) * n * n);
}

void bm_matmul_parallel(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Tensor a = make({n, n}, 1), b = make({n, n}, 2), c({n, n});
    for (auto _ : state) {
        k::matmul_nn(a.ptr(), b.ptr(), c.ptr(), n, n, n);
        benchmark::DoNotOptimize(c.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n) * n * n);
}

void bm_softmax_serial(benchmark::State& state) {
    int rows = static_cast<int>(state.range(0));
    Tensor x = make({rows, 77}, 3), y({rows, 77});
    for (auto _ : state) {
        k::serial::softmax_rows(x.ptr(), y.ptr(), rows, 77, 0);
        benchmark::DoNotOptimize(y.data.data());
    }
}

void bm_softmax_parallel(benchmark::State& state) {
    int rows = static_cast<int>(state.range(0));
    Tensor x = make({rows, 77}, 3), y({rows, 77});
    for (auto _ : state) {
        k::softmax_rows(x.ptr(), y.ptr(), rows, 77, 0);
        benchmark::DoNotOptimize(y.data.data());
    }
}

void bm_bilinear_serial(benchmark::State& state) {
    int ch = static_cast<int>(state.range(0));
    Tensor src = make({ch, 16, 16}, 4), dst({ch, 32, 32});
    for (auto _ : state) {
        k::serial::bilinear_resize(src.ptr(), dst.ptr(), ch, 16, 16, 32, 32);
        benchmark::DoNotOptimize(dst.data.data());
    }
}

void bm_bilinear_parallel(benchmark::State& state) {
    int ch = static_cast<int>(state.range(0));
    Tensor src = make({ch, 16, 16}, 4), dst({ch, 32, 32});
    for (auto _ : state) {
        k::bilinear_resize(src.ptr(), dst.ptr(), ch, 16, 16, 32, 32);
        benchmark::DoNotOptimize(dst.data.data());
    }
}

void bm_layernorm_serial(benchmark::State& state) {
    int rows = static_cast<int>(state.range(0));
    Tensor x = make({rows, 768}, 5), g = make({768}, 6), b = make({768}, 7), y({rows, 768});
    for (auto _ : state) {
        k::serial::layernorm_rows(x.ptr(), g.ptr(), b.ptr(), 1e-5, y.ptr(), rows, 768);
        benchmark::DoNotOptimize(y.data.data());
    }
}

void bm_layernorm_parallel(benchmark::State& state) {
    int rows = static_cast<int>(state.range(0));
    Tensor x = make({rows, 768}, 5), g = make({768}, 6), b = make({768}, 7), y({rows, 768});
    for (auto _ : state) {
        k::layernorm_rows(x.ptr(), g.ptr(), b.ptr(), 1e-5, y.ptr(), rows, 768);
        benchmark::DoNotOptimize(y.data.data());
    }
}

}  // namespace

BENCHMARK(bm_matmul_serial)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(bm_matmul_parallel)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(bm_softmax_serial)->Arg(128)->Arg(4096);
BENCHMARK(bm_softmax_parallel)->Arg(128)->Arg(4096);
BENCHMARK(bm_bilinear_serial)->Arg(16)->Arg(616);  // 616 = 8 heads x 77 tokens
BENCHMARK(bm_bilinear_parallel)->Arg(16)->Arg(616);
BENCHMARK(bm_layernorm_serial)->Arg(77)->Arg(2048);
BENCHMARK(bm_layernorm_parallel)->Arg(77)->Arg(2048);

BENCHMARK_MAIN();

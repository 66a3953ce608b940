#include <benchmark/benchmark.h>

#include "zamba/rng.hpp"
#include "zamba/scan.hpp"

using namespace zamba;

namespace {

struct ScanFixture {
    TensorF delta, A, B, C, x;
    ScanFixture(int64_t T, int64_t di, int64_t ds) {
        Rng rng(17);
        delta = TensorF::zeros({T, di});
        for (auto& v : delta.data()) v = static_cast<float>(std::exp(rng.uniform(-4.0, 0.0)));
        A = TensorF::zeros({di, ds});
        for (auto& v : A.data()) v = static_cast<float>(-std::exp(rng.uniform(-1.0, 1.5)));
        B = TensorF::zeros({T, ds});
        C = TensorF::zeros({T, ds});
        x = TensorF::zeros({T, di});
        for (auto& v : B.data()) v = static_cast<float>(rng.normal(0, 0.7));
        for (auto& v : C.data()) v = static_cast<float>(rng.normal(0, 0.7));
        for (auto& v : x.data()) v = static_cast<float>(rng.normal(0, 0.8));
    }
};

}  // namespace

static void ScanSequential(benchmark::State& state) {
    NoGradGuard ng;
    ScanFixture f(state.range(0), 256, 16);
    for (auto _ : state) {
        auto r = selective_scan_sequential(f.delta, f.A, f.B, f.C, f.x);
        benchmark::DoNotOptimize(r.y.data().data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 256 * 16);
}
BENCHMARK(ScanSequential)->Arg(64)->Arg(256)->Arg(1024);

static void ScanParallelForm(benchmark::State& state) {
    NoGradGuard ng;
    ScanFixture f(state.range(0), 256, 16);
    for (auto _ : state) {
        auto r = selective_scan_parallel(f.delta, f.A, f.B, f.C, f.x);
        benchmark::DoNotOptimize(r.y.data().data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 256 * 16);
}
BENCHMARK(ScanParallelForm)->Arg(64)->Arg(256)->Arg(1024);

#include <benchmark/benchmark.h>

#include "zamba/attention.hpp"
#include "zamba/rng.hpp"

using namespace zamba;

static void CausalAttention(benchmark::State& state) {
    NoGradGuard ng;
    const int64_t T = state.range(0), W = 256;
    Rng rng(5);
    auto q = TensorF::zeros({T, W});
    auto k = TensorF::zeros({T, W});
    auto v = TensorF::zeros({T, W});
    for (auto* t : {&q, &k, &v})
        for (auto& x : t->data()) x = static_cast<float>(rng.normal(0, 1));
    for (auto _ : state) {
        auto o = causal_attention(q, k, v, 4);
        benchmark::DoNotOptimize(o.data().data());
    }
    state.SetComplexityN(T);
}
BENCHMARK(CausalAttention)->RangeMultiplier(2)->Range(32, 512)->Complexity();

static void GsaDecodeStep(benchmark::State& state) {
    const int64_t d = 128;
    Rng rng(6);
    auto g = GsaParams<float>::create(d, 4 * d);
    for (Tensor<float>* t : {&g.qkv_proj, &g.attn_out_proj, &g.mlp_in, &g.mlp_out})
        for (auto& x : t->data()) x = static_cast<float>(rng.normal(0, 0.1));
    std::fill(g.norm_concat.data().begin(), g.norm_concat.data().end(), 1.0f);
    std::fill(g.norm_premlp.data().begin(), g.norm_premlp.data().end(), 1.0f);
    auto site = TensorF::zeros({d, d});
    for (auto& x : site.data()) x = static_cast<float>(rng.normal(0, 0.1));
    std::vector<float> xrow(d, 0.1f), x0row(d, 0.2f);
    KvSlot<float> cache;
    for (auto _ : state) {
        auto y = gsa_step(g, site, xrow, x0row, 4, 1e-5f, false, cache);
        benchmark::DoNotOptimize(y.data());
        if (cache.positions >= state.range(0)) {
            cache = KvSlot<float>{};  // restart the window
        }
    }
    state.SetLabel("cache window " + std::to_string(state.range(0)));
}
BENCHMARK(GsaDecodeStep)->Arg(512)->Arg(4096);

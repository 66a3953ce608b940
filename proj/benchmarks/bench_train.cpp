#include <algorithm>

#include <benchmark/benchmark.h>

#include "zamba/model.hpp"
#include "zamba/optimizer.hpp"
#include "zamba/parallel.hpp"
#include "zamba/generate.hpp"
#include "zamba/trainer.hpp"

using namespace zamba;

static void TrainStepToy(benchmark::State& state) {
    set_num_threads(static_cast<int>(state.range(1)));
    ZambaConfig cfg;
    cfg.d_model = 128;
    cfg.n_layers = 12;
    cfg.gsa_period = 3;
    cfg.seed = 13;
    auto m = build_model<float>(cfg);
    AdamW<float> opt(m.named_params());
    Rng rng(1);
    const int64_t B = 2, T = state.range(0);
    TokenIds inputs(B * T), targets(B * T);
    for (auto& t : inputs) t = static_cast<int32_t>(rng.next_below(256));
    for (auto& t : targets) t = static_cast<int32_t>(rng.next_below(256));
    for (auto _ : state) {
        auto r = train_step(m, opt, inputs, targets, {B, T}, 1e-4);
        benchmark::DoNotOptimize(r.loss);
    }
    state.SetItemsProcessed(state.iterations() * B * T);
    set_num_threads(1);
}
BENCHMARK(TrainStepToy)->Args({128, 1})->Args({128, 2})->Unit(benchmark::kMillisecond);

static void DecodeStepToy(benchmark::State& state) {
    ZambaConfig cfg;
    cfg.d_model = 128;
    cfg.n_layers = 12;
    cfg.gsa_period = 3;
    cfg.seed = 13;
    cfg.context_length = 1 << 20;
    auto m = build_model<float>(cfg);
    auto pre = prefill(m, {1, 2, 3});
    int32_t tok = 1;
    for (auto _ : state) {
        auto logits = step_decode(m, pre.state, tok);
        tok = static_cast<int32_t>(std::max_element(logits.begin(), logits.end()) -
                                   logits.begin());
        benchmark::DoNotOptimize(tok);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(DecodeStepToy)->Unit(benchmark::kMicrosecond);

#include <benchmark/benchmark.h>

#include "zamba/corpus.hpp"
#include "zamba/rng.hpp"

using namespace zamba;

namespace {

std::string random_doc(Rng& rng, int words) {
    std::string out;
    for (int i = 0; i < words; ++i) {
        if (i) out += ' ';
        out += "w" + std::to_string(rng.next_below(30000));
    }
    return out;
}

}  // namespace

static void Shingle13(benchmark::State& state) {
    Rng rng(1);
    const std::string doc = random_doc(rng, state.range(0));
    for (auto _ : state) {
        auto s = shingle_13grams(doc);
        benchmark::DoNotOptimize(s.data());
    }
    state.SetBytesProcessed(state.iterations() * doc.size());
}
BENCHMARK(Shingle13)->Arg(200)->Arg(2000);

static void Minhash128(benchmark::State& state) {
    Rng rng(2);
    const auto shingles = shingle_13grams(random_doc(rng, state.range(0)));
    for (auto _ : state) {
        auto sig = minhash(shingles, 7);
        benchmark::DoNotOptimize(sig.slots.data());
    }
    state.SetItemsProcessed(state.iterations() * shingles.size() * kMinhashSlots);
}
BENCHMARK(Minhash128)->Arg(200)->Arg(2000);

static void LshInsertQuery(benchmark::State& state) {
    Rng rng(3);
    std::vector<MinHashSignature> sigs;
    for (int i = 0; i < state.range(0); ++i)
        sigs.push_back(minhash(shingle_13grams(random_doc(rng, 150)), 7));
    for (auto _ : state) {
        LshIndex index;
        int dup = 0;
        for (size_t i = 0; i < sigs.size(); ++i) {
            if (!index.query(sigs[i]).empty()) {
                ++dup;
                continue;
            }
            index.insert("d" + std::to_string(i), sigs[i]);
        }
        benchmark::DoNotOptimize(dup);
    }
    state.SetItemsProcessed(state.iterations() * sigs.size());
}
BENCHMARK(LshInsertQuery)->Arg(256)->Arg(2048);

static void EndToEndDedup(benchmark::State& state) {
    Rng rng(4);
    std::vector<Document> docs;
    for (int i = 0; i < state.range(0); ++i) {
        const std::string text = random_doc(rng, 150);
        docs.push_back({"d" + std::to_string(i), "pile", text});
        if (i % 4 == 0)
            docs.push_back({"dup" + std::to_string(i), "pile", text + " " + random_doc(rng, 20)});
    }
    for (auto _ : state) {
        auto res = dedup_corpora({{"pile", true, &docs}}, 11);
        benchmark::DoNotOptimize(res.index_size);
    }
    state.SetItemsProcessed(state.iterations() * docs.size());
}
BENCHMARK(EndToEndDedup)->Arg(512);

#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "helpers.hpp"
#include "zamba/checkpoint.hpp"
#include "zamba/parallel.hpp"
#include "zamba/trainer.hpp"

using namespace zamba;

namespace {

std::shared_ptr<const TokenIds> synthetic_corpus(int64_t n, uint64_t seed) {
    Rng rng(seed);
    auto tokens = std::make_shared<TokenIds>();
    tokens->reserve(n);
    // byte soup with repeating trigrams so there is something to learn
    const std::string words[] = {"the ", "cat ", "sat. ", "dog ", "ran. "};
    while (static_cast<int64_t>(tokens->size()) < n) {
        const auto& w = words[rng.next_below(5)];
        for (unsigned char c : w) tokens->push_back(c);
    }
    tokens->resize(n);
    return tokens;
}

ZambaConfig tiny_config() {
    ZambaConfig cfg;
    cfg.vocab_size = 258;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.gsa_period = 2;
    cfg.d_state = 4;
    cfg.n_heads = 2;
    cfg.context_length = 64;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("mix sampler holds the 60/40 replay split over 10k draws") {
    auto a = std::make_shared<WindowSampler>(synthetic_corpus(4096, 1), 0, 4096, 8, 11);
    auto b = std::make_shared<WindowSampler>(synthetic_corpus(4096, 2), 0, 4096, 8, 12);
    MixSampler mix({{a, 0.6}, {b, 0.4}}, 99);
    for (int i = 0; i < 10000; ++i) REQUIRE(mix.next().has_value());
    const double frac = static_cast<double>(mix.draw_count(0)) / 10000.0;
    CHECK(std::abs(frac - 0.6) <= 0.015);
}

TEST_CASE("six-way mix matches the weights within 3 sigma") {
    const std::vector<double> weights = {0.6235, 0.1548, 0.1285, 0.0489, 0.0355, 0.0090};
    std::vector<MixSampler::Source> sources;
    for (size_t i = 0; i < weights.size(); ++i)
        sources.push_back({std::make_shared<WindowSampler>(synthetic_corpus(512, 40 + i), 0, 512,
                                                            4, 50 + i),
                           weights[i]});
    MixSampler mix(std::move(sources), 1234);
    const int n = 20000;
    for (int i = 0; i < n; ++i) REQUIRE(mix.next().has_value());
    double total_w = 0;
    for (double w : weights) total_w += w;
    for (size_t i = 0; i < weights.size(); ++i) {
        const double p = weights[i] / total_w;
        const double sigma = std::sqrt(p * (1 - p) / n);
        const double frac = static_cast<double>(mix.draw_count(i)) / n;
        CHECK(std::abs(frac - p) <= 3.0 * sigma);
    }
}

TEST_CASE("single source with weight 1 is a passthrough") {
    std::vector<TokenIds> items = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
    auto vs = std::make_shared<VectorStream>(items);
    MixSampler mix({{vs, 1.0}}, 7);
    for (const auto& want : items) {
        auto got = mix.next();
        REQUIRE(got.has_value());
        CHECK(*got == want);
    }
    CHECK_FALSE(mix.next().has_value());
}

TEST_CASE("exhausted source renormalizes onto the survivors") {
    auto finite = std::make_shared<VectorStream>(std::vector<TokenIds>{{1}, {1}});
    auto endless = std::make_shared<WindowSampler>(synthetic_corpus(256, 3), 0, 256, 1, 5);
    MixSampler mix({{finite, 0.9}, {endless, 0.1}}, 21);
    // the finite source dies after two draws; everything after still arrives
    for (int i = 0; i < 50; ++i) REQUIRE(mix.next().has_value());
    CHECK(mix.draw_count(0) == 2);
    CHECK(mix.draw_count(1) == 48);
}

TEST_CASE("weights must be positive") {
    auto s = std::make_shared<VectorStream>(std::vector<TokenIds>{{1}});
    CHECK_THROWS_AS(MixSampler({{s, 0.0}}, 1), std::invalid_argument);
}

TEST_CASE("training loss trajectory is deterministic under a fixed seed") {
    auto corpus = synthetic_corpus(2048, 77);
    auto run = [&] {
        auto model = build_model<float>(tiny_config());
        AdamW<float> opt(model.named_params());
        WindowSampler data(corpus, 0, 2048, 9, 13);
        TrainOptions opts;
        opts.steps = 8;
        opts.batch_size = 2;
        opts.seq_len = 8;
        std::ostringstream metrics;
        auto res = run_training(model, opt, data, [](int64_t) { return 1e-3; }, opts, nullptr,
                                &metrics);
        return std::pair(res.last_loss, metrics.str());
    };
    auto [l1, m1] = run();
    auto [l2, m2] = run();
    CHECK(l1 == l2);
    CHECK(m1 == m2);
}

TEST_CASE("metrics records carry the expected fields") {
    auto corpus = synthetic_corpus(1024, 5);
    auto model = build_model<float>(tiny_config());
    AdamW<float> opt(model.named_params());
    WindowSampler data(corpus, 0, 1024, 9, 3);
    TrainOptions opts;
    opts.steps = 2;
    opts.batch_size = 2;
    opts.seq_len = 8;
    std::ostringstream metrics;
    run_training(model, opt, data, [](int64_t) { return 1e-3; }, opts, nullptr, &metrics);
    std::istringstream lines(metrics.str());
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) {
        ++count;
        for (const char* key : {"\"step\"", "\"phase\"", "\"lr\"", "\"loss\"", "\"grad_norm\"",
                                "\"tokens_seen\""})
            CHECK(line.find(key) != std::string::npos);
    }
    CHECK(count == 2);
}

TEST_CASE("resume from a checkpoint continues the trajectory bit-identically") {
    const std::string dir = std::filesystem::temp_directory_path() / "zamba_resume_test";
    std::filesystem::remove_all(dir);
    auto corpus = synthetic_corpus(2048, 31);
    auto cfg = tiny_config();

    // uninterrupted 10-step run
    std::string full_metrics;
    {
        auto model = build_model<float>(cfg);
        AdamW<float> opt(model.named_params());
        WindowSampler data(corpus, 0, 2048, 9, 13);
        TrainOptions opts;
        opts.steps = 10;
        opts.batch_size = 2;
        opts.seq_len = 8;
        std::ostringstream metrics;
        run_training(model, opt, data, [](int64_t t) { return 1e-3 / (1 + t); }, opts, nullptr,
                     &metrics);
        full_metrics = metrics.str();
    }

    // 5 steps, checkpoint, then 5 more from the restored state
    std::string split_metrics;
    {
        auto model = build_model<float>(cfg);
        AdamW<float> opt(model.named_params());
        WindowSampler data(corpus, 0, 2048, 9, 13);
        TrainOptions opts;
        opts.steps = 5;
        opts.batch_size = 2;
        opts.seq_len = 8;
        opts.out_dir = dir;
        opts.ckpt_interval = 1000;  // only the end-of-run save fires
        std::ostringstream m1;
        run_training(model, opt, data, [](int64_t t) { return 1e-3 / (1 + t); }, opts, nullptr,
                     &m1);
        split_metrics = m1.str();

        const auto ck = read_checkpoint(dir + "/ckpt_phase1_latest.zmb");
        auto model2 = load_model<float>(ck);
        AdamW<float> opt2(model2.named_params());
        restore_optimizer(ck, opt2);
        WindowSampler data2(corpus, 0, 2048, 9, 13);
        data2.set_state_counter(std::stoull(ck.extras.at("train.sampler_counter")));
        TrainOptions opts2 = opts;
        opts2.steps = 10;
        opts2.start_step = std::stoll(ck.extras.at("train.step"));
        opts2.tokens_seen0 = std::stoll(ck.extras.at("train.tokens_seen"));
        opts2.out_dir.clear();
        std::ostringstream m2;
        run_training(model2, opt2, data2, [](int64_t t) { return 1e-3 / (1 + t); }, opts2, nullptr,
                     &m2);
        split_metrics += m2.str();
    }
    CHECK(split_metrics == full_metrics);
    std::filesystem::remove_all(dir);
}

TEST_CASE("results are bit-identical for any worker thread count") {
    auto corpus = synthetic_corpus(2048, 91);
    auto run_with = [&](int threads) {
        set_num_threads(threads);
        auto model = build_model<float>(tiny_config());
        AdamW<float> opt(model.named_params());
        WindowSampler data(corpus, 0, 2048, 9, 5);
        TrainOptions opts;
        opts.steps = 4;
        opts.batch_size = 2;
        opts.seq_len = 8;
        std::ostringstream metrics;
        run_training(model, opt, data, [](int64_t) { return 1e-3; }, opts, nullptr, &metrics);
        set_num_threads(1);
        return metrics.str();
    };
    const auto one = run_with(1);
    CHECK(run_with(2) == one);
    CHECK(run_with(3) == one);
}

TEST_CASE("non-finite loss aborts the step with a numeric error") {
    auto cfg = tiny_config();
    auto model = build_model<float>(cfg);
    // poison the head so the logits (and only the loss path) go NaN
    model.head.data()[0] = std::numeric_limits<float>::quiet_NaN();
    AdamW<float> opt(model.named_params());
    TokenIds inputs = {0, 0, 0, 0};
    TokenIds targets = {1, 1, 1, 1};
    CHECK_THROWS_AS(train_step(model, opt, inputs, targets, {1, 4}, 1e-3), numeric_error);
}

}  // TEST_SUITE

// zamba: corpus prep, two-phase training, generation, schedule inspection
// and memory accounting behind one binary.
//
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
// abort (non-finite loss).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "zamba/checkpoint.hpp"
#include "zamba/corpus.hpp"
#include "zamba/generate.hpp"
#include "zamba/parallel.hpp"
#include "zamba/runconfig.hpp"
#include "zamba/schedule.hpp"
#include "zamba/tokenizer.hpp"
#include "zamba/trainer.hpp"

namespace {

using nlohmann::json;
using namespace zamba;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

std::shared_ptr<const TokenIds> load_corpus_tokens(const std::string& path) {
    auto tokens = std::make_shared<TokenIds>(byte_encode_raw(read_file(path)));
    if (tokens->size() < 2) throw std::runtime_error("corpus " + path + " is too small");
    return tokens;
}

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    int threads = 1;
    std::string from_checkpoint;
};

RunConfig resolve_config(const CommonArgs& args, bool need_config = true) {
    RunConfig rc;
    if (!args.config_path.empty()) {
        rc = load_run_config(args.config_path);
    } else if (need_config) {
        throw std::invalid_argument("--config is required for this command");
    }
    if (args.seed) {
        rc.seed = *args.seed;
        rc.model.seed = *args.seed;
    }
    if (args.out_dir) rc.out_dir = *args.out_dir;
    return rc;
}

// ------------------------------------------------------------------ prep

int cmd_prep(const std::vector<std::string>& inputs, const std::vector<std::string>& query_only,
             const std::string& out_dir, uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    auto is_query_only = [&](const std::string& source) {
        return std::find(query_only.begin(), query_only.end(), source) != query_only.end();
    };

    struct CorpusBuf {
        std::string file;
        std::vector<Document> docs;           // all parsed records
        std::vector<FilterVerdict> verdicts;  // aligned with docs
        std::vector<Document> survivors;      // filtered docs entering dedup
        std::vector<size_t> survivor_idx;     // position of each survivor in docs
    };
    std::vector<CorpusBuf> corpora;

    for (const auto& path : inputs) {
        CorpusBuf buf;
        buf.file = path;
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot open " + path);
        std::string line;
        size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": invalid record: " + e.what());
            }
            Document doc{j.value("id", ""), j.value("source", ""), j.value("text", "")};
            if (doc.id.empty())
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": record has no id");
            buf.docs.push_back(std::move(doc));
        }
        // filtering: pile/c4 only; cosmopedia bypasses everything
        for (size_t d = 0; d < buf.docs.size(); ++d) {
            const Document& doc = buf.docs[d];
            FilterVerdict v;
            if (filter_applies(doc.source) && !bypasses_processing(doc.source)) v = filter_doc(doc);
            buf.verdicts.push_back(v);
            if (v.keep && !bypasses_processing(doc.source)) {
                buf.survivors.push_back(doc);
                buf.survivor_idx.push_back(d);
            }
        }
        corpora.push_back(std::move(buf));
    }

    std::vector<DedupInput> dedup_inputs;
    for (const auto& c : corpora) {
        DedupInput in;
        in.name = c.file;
        in.docs = &c.survivors;
        bool any_insert = false;
        for (const auto& doc : c.survivors)
            if (!is_query_only(doc.source)) any_insert = true;
        in.insert_mode = any_insert;
        dedup_inputs.push_back(in);
    }
    const DedupResult dedup = dedup_corpora(dedup_inputs, splitmix64(seed ^ 0xDED0));

    json report;
    report["index_size"] = dedup.index_size;
    report["corpora"] = json::array();
    for (size_t i = 0; i < corpora.size(); ++i) {
        const auto& c = corpora[i];
        std::ofstream os(out_dir + "/" +
                         std::filesystem::path(c.file).stem().string() + ".out.jsonl");
        std::map<std::string, std::array<int64_t, 3>> per_source;  // total, filtered, duplicates
        std::vector<const DocMark*> mark_of(c.docs.size(), nullptr);
        for (size_t s = 0; s < c.survivor_idx.size(); ++s)
            mark_of[c.survivor_idx[s]] = &dedup.marks[i][s];
        for (size_t d = 0; d < c.docs.size(); ++d) {
            const Document& doc = c.docs[d];
            auto& stats = per_source[doc.source];
            ++stats[0];
            json rec{{"id", doc.id}, {"source", doc.source}, {"text", doc.text}};
            if (!c.verdicts[d].keep) {
                ++stats[1];
                rec["verdict"] = filter_rule_name(c.verdicts[d].failed_rule);
                rec["duplicate"] = false;
            } else {
                rec["verdict"] = "keep";
                const DocMark* mark = mark_of[d];
                rec["duplicate"] = mark && mark->duplicate;
                if (mark && mark->duplicate) {
                    ++stats[2];
                    rec["matched_id"] = mark->matched_id;
                }
            }
            os << rec.dump() << '\n';
        }
        for (const auto& [source, stats] : per_source) {
            json entry{{"file", c.file},
                       {"source", source},
                       {"total", stats[0]},
                       {"filtered", stats[1]},
                       {"duplicates", stats[2]},
                       {"query_only", is_query_only(source)}};
            entry["filter_pct"] =
                stats[0] ? 100.0 * static_cast<double>(stats[1]) / static_cast<double>(stats[0]) : 0.0;
            const int64_t deduped = stats[0] - stats[1];
            entry["duplicate_pct"] =
                deduped ? 100.0 * static_cast<double>(stats[2]) / static_cast<double>(deduped) : 0.0;
            report["corpora"].push_back(std::move(entry));
        }
    }
    std::ofstream ros(out_dir + "/report.json");
    ros << report.dump(2) << '\n';
    std::cout << report.dump(2) << std::endl;
    return 0;
}

// ------------------------------------------------------------ train/anneal

template <typename S>
int run_train(const RunConfig& rc, const CommonArgs& args, bool anneal) {
    auto tokens = load_corpus_tokens(rc.train_corpus);
    const int64_t n = static_cast<int64_t>(tokens->size());
    const int64_t val_lo = n - static_cast<int64_t>(rc.val_fraction * static_cast<double>(n));

    Model<S> model;
    std::optional<AdamW<S>> opt;
    TrainOptions opts;
    opts.steps = rc.steps;
    opts.batch_size = rc.batch_size;
    opts.seq_len = rc.seq_len;
    opts.ckpt_interval = rc.ckpt_interval;
    opts.eval_interval = rc.eval_interval;
    opts.out_dir = rc.out_dir;
    opts.seed = rc.seed;
    opts.phase = anneal ? "anneal" : "phase1";

    uint64_t sampler_counter = 0;
    if (!args.from_checkpoint.empty()) {
        const CheckpointFile ck = read_checkpoint(args.from_checkpoint);
        const auto diff = config_arch_diff(ck.config, rc.model);
        if (!diff.empty()) {
            std::string msg = "checkpoint/config architecture mismatch:";
            for (const auto& d : diff) msg += "\n  " + d;
            throw std::invalid_argument(msg);
        }
        model = load_model<S>(ck);
        opt.emplace(model.named_params());
        // resume the same phase; a different phase starts fresh from the weights
        const auto phase_it = ck.extras.find("train.phase");
        if (phase_it != ck.extras.end() && phase_it->second == opts.phase) {
            restore_optimizer(ck, *opt);
            opts.start_step = std::stoll(ck.extras.at("train.step"));
            opts.tokens_seen0 = std::stoll(ck.extras.at("train.tokens_seen"));
            sampler_counter = std::stoull(ck.extras.at("train.sampler_counter"));
        }
    } else {
        if (anneal) throw std::invalid_argument("anneal requires --from-checkpoint");
        model = build_model<S>(rc.model);
        opt.emplace(model.named_params());
    }

    std::unique_ptr<TokenStream> stream;
    std::vector<TokenIds> eval_windows;
    if (anneal) {
        if (rc.anneal_corpus.empty())
            throw std::invalid_argument("anneal requires data.anneal_corpus");
        auto anneal_tokens = load_corpus_tokens(rc.anneal_corpus);
        const int64_t an = static_cast<int64_t>(anneal_tokens->size());
        const int64_t aval_lo = an - static_cast<int64_t>(rc.val_fraction * static_cast<double>(an));
        auto replay = std::make_shared<WindowSampler>(tokens, 0, val_lo, rc.seq_len + 1,
                                                      splitmix64(rc.seed ^ 0x11));
        auto fresh = std::make_shared<WindowSampler>(anneal_tokens, 0, aval_lo, rc.seq_len + 1,
                                                     splitmix64(rc.seed ^ 0x22));
        stream = std::make_unique<MixSampler>(
            std::vector<MixSampler::Source>{{replay, rc.replay_fraction},
                                            {fresh, 1.0 - rc.replay_fraction}},
            rc.seed);
        eval_windows =
            make_eval_windows(anneal_tokens, aval_lo, an, rc.seq_len, rc.eval_batches, rc.seed);
    } else {
        stream = std::make_unique<WindowSampler>(tokens, 0, val_lo, rc.seq_len + 1, rc.seed);
        eval_windows = make_eval_windows(tokens, val_lo, n, rc.seq_len, rc.eval_batches, rc.seed);
    }
    stream->set_state_counter(sampler_counter);

    LrFn lr_fn;
    if (anneal) {
        const int64_t rewarm = rc.rewarmup_steps_eff(rc.steps);
        const auto sched = AnnealSchedule::make(rc.anneal_eta0, rc.anneal_etaT, rc.anneal_gamma,
                                                rc.steps - rewarm, rewarm);
        lr_fn = [sched](int64_t t) { return lr_at(sched, t); };
    } else {
        Phase1Schedule sched;
        sched.eta_max = rc.eta_max;
        sched.eta_min = rc.eta_min;
        sched.warmup_fraction = rc.warmup_fraction;
        sched.total_steps = rc.steps;
        sched.validate();
        lr_fn = [sched](int64_t t) { return lr_at(sched, t); };
    }

    std::filesystem::create_directories(rc.out_dir);
    write_effective_config(rc, rc.out_dir + "/effective_config.json");
    std::ofstream metrics(rc.out_dir + "/metrics.jsonl", std::ios::app);
    const auto result = run_training(model, *opt, *stream, lr_fn, opts, &eval_windows, &metrics);
    std::cout << "phase=" << opts.phase << " steps=" << result.steps_done
              << " first_loss=" << result.first_loss << " last_loss=" << result.last_loss
              << " val_loss=" << result.val_loss << std::endl;
    return 0;
}

// -------------------------------------------------------------- generate

template <typename S>
int run_generate(const CheckpointFile& ck, const std::string& prompt, int64_t count,
                 const std::string& sampler_name, double temperature, uint64_t seed,
                 const std::string& trace_path) {
    if (prompt.empty()) throw std::invalid_argument("prompt must be non-empty");
    Model<S> model = load_model<S>(ck);

    TokenIds tokens;
    tokens.push_back(kBosToken);
    for (int32_t t : byte_encode_raw(prompt)) tokens.push_back(t);

    SamplerSpec spec;
    if (sampler_name == "greedy") {
        spec.kind = SamplerSpec::Kind::greedy;
    } else if (sampler_name == "temperature") {
        spec.kind = SamplerSpec::Kind::temperature;
        spec.temperature = temperature;
    } else {
        throw std::invalid_argument("unknown sampler '" + sampler_name + "'");
    }
    spec.seed = seed;

    const auto result = generate(model, tokens, count, spec, !trace_path.empty());
    if (!trace_path.empty()) {
        std::ofstream ts(trace_path);
        for (const auto& e : result.trace) {
            json top = json::array();
            for (const auto& [tok, logit] : e.top5)
                top.push_back({{"token", tok}, {"logit", logit}});
            ts << json{{"position", e.position}, {"token", e.token}, {"logit_top5", top}}.dump()
               << '\n';
        }
    }
    std::cout << byte_detokenize(result.tokens) << std::endl;
    return 0;
}

// -------------------------------------------------------------- schedule

int cmd_schedule(const RunConfig& rc, bool dump) {
    Phase1Schedule p1;
    p1.eta_max = rc.eta_max;
    p1.eta_min = rc.eta_min;
    p1.warmup_fraction = rc.warmup_fraction;
    p1.total_steps = rc.steps;
    p1.validate();
    const int64_t rewarm = rc.rewarmup_steps_eff(rc.steps);
    const auto anneal = AnnealSchedule::make(rc.anneal_eta0, rc.anneal_etaT, rc.anneal_gamma,
                                             rc.steps - rewarm, rewarm);
    if (dump) {
        std::cout << "phase,step,lr\n";
        for (int64_t t = 0; t <= p1.total_steps; ++t)
            std::cout << "phase1," << t << ',' << lr_at(p1, t) << '\n';
        for (int64_t t = 0; t <= anneal.span(); ++t)
            std::cout << "anneal," << t << ',' << lr_at(anneal, t) << '\n';
    } else {
        std::cout << "phase1: eta_max=" << p1.eta_max << " eta_min=" << p1.eta_min
                  << " warmup_steps=" << p1.warmup_steps() << " total=" << p1.total_steps << '\n'
                  << "anneal: eta0=" << anneal.eta0 << " etaT=" << anneal.etaT
                  << " gamma=" << anneal.gamma << " A=" << anneal.coef_a << " B=" << anneal.coef_b
                  << " rewarmup=" << anneal.rewarmup_steps << " total=" << anneal.span() << '\n';
    }
    return 0;
}

// --------------------------------------------------------------- memstat

int cmd_memstat(const RunConfig& rc, int64_t seq_len, int64_t bytes_per_scalar) {
    const MemoryReport r = memory_report(rc.model, seq_len, bytes_per_scalar);
    json j{{"seq_len", seq_len},
           {"bytes_per_scalar", bytes_per_scalar},
           {"sites", r.sites},
           {"ssm_state_bytes", r.ssm_state_bytes},
           {"kv_bytes", r.kv_bytes},
           {"baseline_kv_bytes", r.baseline_kv_bytes},
           {"kv_ratio_vs_baseline", r.kv_ratio_vs_baseline}};
    std::cout << j.dump(2) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zamba: hybrid SSM-attention language model toolkit"};
    app.require_subcommand(1);
    // global options may be written after the subcommand name
    app.fallthrough();

    CommonArgs common;
    app.add_option("--config", common.config_path, "JSON run configuration")->envname("ZAMBA_CONFIG");
    app.add_option("--seed", common.seed, "override run seed")->envname("ZAMBA_SEED");
    app.add_option("--out", common.out_dir, "output directory")->envname("ZAMBA_OUT");
    app.add_option("--threads", common.threads, "worker threads (deterministic for any value)")
        ->envname("ZAMBA_THREADS");
    app.add_option("--from-checkpoint", common.from_checkpoint, "ZMB1 checkpoint to load");

    auto* prep = app.add_subcommand("prep", "filter and deduplicate corpora");
    prep->fallthrough();
    std::vector<std::string> prep_inputs, prep_query_only;
    prep->add_option("--inputs", prep_inputs, "JSONL corpora, processed in order");
    prep->add_option("--query-only", prep_query_only,
                     "sources matched against the index but never inserted");

    auto* train = app.add_subcommand("train", "phase-1 pretraining (warmup + cosine)");
    train->fallthrough();
    auto* anneal = app.add_subcommand("anneal", "rewarmed exponential annealing with replay");
    anneal->fallthrough();

    auto* generate_cmd = app.add_subcommand("generate", "autoregressive generation");
    generate_cmd->fallthrough();
    std::string gen_prompt, gen_sampler = "greedy", gen_trace;
    int64_t gen_n = 64;
    double gen_temperature = 1.0;
    uint64_t gen_seed = 1;
    generate_cmd->add_option("--prompt", gen_prompt, "prompt text");
    generate_cmd->add_option("-n,--tokens", gen_n, "tokens to generate");
    generate_cmd->add_option("--sampler", gen_sampler, "greedy | temperature");
    generate_cmd->add_option("--temperature", gen_temperature, "softmax temperature");
    generate_cmd->add_option("--sample-seed", gen_seed, "sampling seed");
    generate_cmd->add_option("--trace", gen_trace, "write per-token top-5 logit trace (JSONL)");

    auto* schedule_cmd = app.add_subcommand("schedule", "inspect learning-rate schedules");
    schedule_cmd->fallthrough();
    bool dump = false;
    schedule_cmd->add_flag("--dump", dump, "print the full per-step table");

    auto* memstat = app.add_subcommand("memstat", "generation memory accounting");
    memstat->fallthrough();
    int64_t mem_seq_len = 4096, mem_bps = 2;
    memstat->add_option("--seq-len", mem_seq_len, "sequence length");
    memstat->add_option("--bytes-per-scalar", mem_bps, "bytes per cached scalar");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        set_num_threads(common.threads);
        tune_allocator();
        if (prep->parsed()) {
            if (!common.out_dir) throw std::invalid_argument("prep requires --out");
            return cmd_prep(prep_inputs, prep_query_only, *common.out_dir,
                            common.seed.value_or(1));
        }
        if (train->parsed() || anneal->parsed()) {
            const RunConfig rc = resolve_config(common);
            if (rc.train_corpus.empty())
                throw std::invalid_argument("data.train_corpus is required");
            return rc.model.precision == Precision::f64
                       ? run_train<double>(rc, common, anneal->parsed())
                       : run_train<float>(rc, common, anneal->parsed());
        }
        if (generate_cmd->parsed()) {
            if (common.from_checkpoint.empty())
                throw std::invalid_argument("generate requires --from-checkpoint");
            const CheckpointFile ck = read_checkpoint(common.from_checkpoint);
            return ck.config.precision == Precision::f64
                       ? run_generate<double>(ck, gen_prompt, gen_n, gen_sampler, gen_temperature,
                                              gen_seed, gen_trace)
                       : run_generate<float>(ck, gen_prompt, gen_n, gen_sampler, gen_temperature,
                                             gen_seed, gen_trace);
        }
        if (schedule_cmd->parsed()) return cmd_schedule(resolve_config(common), dump);
        if (memstat->parsed()) return cmd_memstat(resolve_config(common), mem_seq_len, mem_bps);
        throw std::invalid_argument("no subcommand given");
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitUsage;
    } catch (const numeric_error& e) {
        std::cerr << "numerical abort: " << e.what() << std::endl;
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitData;
    }
}

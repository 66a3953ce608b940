#include "zamba/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>

#include <json.hpp>

#include "zamba/checkpoint.hpp"

namespace zamba {

template <typename S>
StepResult train_step(Model<S>& model, AdamW<S>& opt, const TokenIds& inputs,
                      const TokenIds& targets, const Shape& shape, double lr) {
    opt.zero_grad();
    auto logits = model_forward(model, inputs, shape);
    auto loss = cross_entropy_mean(logits, targets);
    const double loss_v = static_cast<double>(loss.item());
    if (!std::isfinite(loss_v)) throw numeric_error("train_step: non-finite loss");
    backward(loss);
    const double norm = opt.step(lr);
    return {loss_v, norm};
}

template <typename S>
double eval_loss(const Model<S>& model, const std::vector<TokenIds>& windows) {
    NoGradGuard ng;
    double total = 0.0;
    for (const auto& w : windows) {
        op_require(w.size() >= 2, "eval_loss", "window must hold at least 2 tokens");
        const int64_t T = static_cast<int64_t>(w.size()) - 1;
        TokenIds inputs(w.begin(), w.end() - 1);
        TokenIds targets(w.begin() + 1, w.end());
        auto logits = model_forward(model, inputs, {T});
        total += static_cast<double>(cross_entropy_mean(logits, targets).item());
    }
    return windows.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : total / static_cast<double>(windows.size());
}

std::vector<TokenIds> make_eval_windows(const std::shared_ptr<const TokenIds>& tokens, int64_t lo,
                                        int64_t hi, int64_t seq_len, int64_t count, uint64_t seed) {
    WindowSampler sampler(tokens, lo, hi, seq_len + 1, splitmix64(seed ^ 0xe7a1));
    std::vector<TokenIds> windows;
    windows.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        auto w = sampler.next();
        if (!w) break;
        windows.push_back(std::move(*w));
    }
    return windows;
}

template <typename S>
TrainRunResult run_training(Model<S>& model, AdamW<S>& opt, TokenStream& data, const LrFn& lr_fn,
                            const TrainOptions& opts, const std::vector<TokenIds>* eval_windows,
                            std::ostream* metrics) {
    op_require(opts.batch_size >= 1 && opts.seq_len >= 1, "train", "batch and seq_len must be >= 1");
    TrainRunResult result;
    int64_t tokens_seen = opts.tokens_seen0;
    const bool to_disk = !opts.out_dir.empty();
    if (to_disk) std::filesystem::create_directories(opts.out_dir);

    auto save = [&](int64_t completed_steps) {
        if (!to_disk) return;
        std::map<std::string, std::string> extras;
        extras["train.step"] = std::to_string(completed_steps);
        extras["train.phase"] = opts.phase;
        extras["train.tokens_seen"] = std::to_string(tokens_seen);
        extras["train.opt_step"] = std::to_string(opt.step_count());
        extras["train.sampler_counter"] = std::to_string(data.state_counter());
        const std::string path =
            opts.out_dir + "/ckpt_" + opts.phase + "_" + std::to_string(completed_steps) + ".zmb";
        save_checkpoint(path, model, &opt, extras);
        save_checkpoint(opts.out_dir + "/ckpt_" + opts.phase + "_latest.zmb", model, &opt, extras);
    };

    TokenIds inputs(opts.batch_size * opts.seq_len);
    TokenIds targets(opts.batch_size * opts.seq_len);
    for (int64_t step = opts.start_step; step < opts.steps; ++step) {
        bool exhausted = false;
        for (int64_t b = 0; b < opts.batch_size; ++b) {
            auto w = data.next();
            if (!w) {
                exhausted = true;
                break;
            }
            op_require(static_cast<int64_t>(w->size()) == opts.seq_len + 1, "train",
                       "stream window length " + std::to_string(w->size()) + " != seq_len+1");
            std::copy(w->begin(), w->end() - 1, inputs.begin() + b * opts.seq_len);
            std::copy(w->begin() + 1, w->end(), targets.begin() + b * opts.seq_len);
        }
        if (exhausted) break;

        const double lr = lr_fn(step + 1);
        const StepResult r =
            train_step(model, opt, inputs, targets, {opts.batch_size, opts.seq_len}, lr);
        tokens_seen += opts.batch_size * opts.seq_len;
        if (result.steps_done == 0 && step == opts.start_step) result.first_loss = r.loss;
        result.last_loss = r.loss;
        ++result.steps_done;

        if (metrics) {
            nlohmann::json rec{{"step", step + 1},   {"phase", opts.phase},
                               {"lr", lr},           {"loss", r.loss},
                               {"grad_norm", r.grad_norm}, {"tokens_seen", tokens_seen}};
            (*metrics) << rec.dump() << '\n';
        }
        if (opts.ckpt_interval > 0 && (step + 1) % opts.ckpt_interval == 0 && step + 1 < opts.steps)
            save(step + 1);
        if (eval_windows && opts.eval_interval > 0 && (step + 1) % opts.eval_interval == 0) {
            result.val_loss = eval_loss(model, *eval_windows);
            if (metrics) {
                nlohmann::json rec{{"step", step + 1},
                                   {"phase", opts.phase + "_eval"},
                                   {"val_loss", result.val_loss},
                                   {"tokens_seen", tokens_seen}};
                (*metrics) << rec.dump() << '\n';
            }
        }
    }
    const int64_t completed = opts.start_step + result.steps_done;
    if (eval_windows && opts.eval_interval <= 0) {
        result.val_loss = eval_loss(model, *eval_windows);
        if (metrics) {
            nlohmann::json rec{{"step", completed},
                               {"phase", opts.phase + "_eval"},
                               {"val_loss", result.val_loss},
                               {"tokens_seen", tokens_seen}};
            (*metrics) << rec.dump() << '\n';
        }
    }
    save(completed);
    return result;
}

#define ZAMBA_TRAINER_INST(S)                                                                     \
    template StepResult train_step<S>(Model<S>&, AdamW<S>&, const TokenIds&, const TokenIds&,     \
                                      const Shape&, double);                                      \
    template double eval_loss<S>(const Model<S>&, const std::vector<TokenIds>&);                  \
    template TrainRunResult run_training<S>(Model<S>&, AdamW<S>&, TokenStream&, const LrFn&,      \
                                            const TrainOptions&, const std::vector<TokenIds>*,    \
                                            std::ostream*);

ZAMBA_TRAINER_INST(float)
ZAMBA_TRAINER_INST(double)
#undef ZAMBA_TRAINER_INST

}  // namespace zamba

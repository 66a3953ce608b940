#pragma once

// Training loop: next-token cross entropy over sampled windows, AdamW with
// global-norm clipping, per-step metrics as line-delimited JSON records
// {step, phase, lr, loss, grad_norm, tokens_seen}, and ZMB1 checkpoints at a
// configurable interval. Batches are drawn from a TokenStream whose counter
// state rides along in the checkpoint, so a resumed run continues the loss
// trajectory bit-identically.

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>

#include "zamba/model.hpp"
#include "zamba/optimizer.hpp"
#include "zamba/sampler.hpp"

namespace zamba {

struct TrainOptions {
    int64_t steps = 2000;
    int64_t batch_size = 16;
    int64_t seq_len = 256;
    int64_t ckpt_interval = 2500;
    int64_t eval_interval = 0;  // 0: evaluate only after the last step
    std::string out_dir;        // empty: keep everything in memory
    std::string phase = "phase1";
    uint64_t seed = 1;
    int64_t start_step = 0;  // completed steps when resuming
    int64_t tokens_seen0 = 0;
};

struct StepResult {
    double loss = 0.0;       // pre-update loss
    double grad_norm = 0.0;  // pre-clip global norm
};

// One optimizer step on a [B, T] batch. Throws numeric_error when the loss
// is non-finite.
template <typename S>
StepResult train_step(Model<S>& model, AdamW<S>& opt, const TokenIds& inputs,
                      const TokenIds& targets, const Shape& shape, double lr);

// Mean cross entropy over fixed windows of seq_len+1 tokens, no grads.
template <typename S>
double eval_loss(const Model<S>& model, const std::vector<TokenIds>& windows);

struct TrainRunResult {
    double first_loss = 0.0;
    double last_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    int64_t steps_done = 0;
};

using LrFn = std::function<double(int64_t)>;

template <typename S>
TrainRunResult run_training(Model<S>& model, AdamW<S>& opt, TokenStream& data, const LrFn& lr_fn,
                            const TrainOptions& opts,
                            const std::vector<TokenIds>* eval_windows = nullptr,
                            std::ostream* metrics = nullptr);

// Deterministic evaluation windows from the tail of a token array.
std::vector<TokenIds> make_eval_windows(const std::shared_ptr<const TokenIds>& tokens, int64_t lo,
                                        int64_t hi, int64_t seq_len, int64_t count, uint64_t seed);

}  // namespace zamba

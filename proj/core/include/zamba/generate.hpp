#pragma once

// Autoregressive generation in recurrent mode: every Mamba block keeps a
// fixed-size state, and only the shared-attention sites grow a KV cache
// (one slot per site, rows of width 2*d_model per position). The current
// token's post-embedding row is concatenated on the fly, so no x_0 history
// is ever stored.

#include <optional>

#include "zamba/model.hpp"

namespace zamba {

template <typename S>
struct GenState {
    std::vector<SsmState<S>> blocks;  // one per Mamba block, constant size
    std::vector<KvSlot<S>> kv;        // one per shared-attention site
    int64_t position = 0;

    size_t ssm_bytes() const {
        size_t b = 0;
        for (const auto& s : blocks) b += s.bytes();
        return b;
    }
    size_t kv_bytes() const {
        size_t b = 0;
        for (const auto& s : kv) b += s.bytes();
        return b;
    }
};

template <typename S>
GenState<S> make_gen_state(const Model<S>& m);

template <typename S>
struct PrefillResult {
    GenState<S> state;
    std::vector<S> logits;  // final position
};

// Batch forward over the prompt with state capture; equivalent to feeding
// the prompt token by token.
template <typename S>
PrefillResult<S> prefill(const Model<S>& m, const TokenIds& prompt);

// One-token advance; returns next-token logits.
template <typename S>
std::vector<S> step_decode(const Model<S>& m, GenState<S>& state, int32_t token);

struct SamplerSpec {
    enum class Kind { greedy, temperature };
    Kind kind = Kind::greedy;
    double temperature = 1.0;
    uint64_t seed = 1;
};

template <typename S>
int32_t sample_token(const std::vector<S>& logits, const SamplerSpec& spec, Rng& rng);

template <typename S>
struct TraceEntry {
    int64_t position;
    int32_t token;
    std::vector<std::pair<int32_t, S>> top5;  // (token, logit) by descending logit
};

template <typename S>
struct GenerateResult {
    TokenIds tokens;  // exactly n generated tokens
    std::vector<TraceEntry<S>> trace;
};

template <typename S>
GenerateResult<S> generate(const Model<S>& m, const TokenIds& prompt, int64_t n,
                           const SamplerSpec& spec, bool with_trace = false);

struct MemoryReport {
    int64_t sites = 0;
    int64_t ssm_state_bytes = 0;   // constant in sequence length
    int64_t kv_bytes = 0;          // linear in positions x sites
    int64_t baseline_kv_bytes = 0; // equal-layer full transformer
    double kv_ratio_vs_baseline = 0.0;
};

// Closed-form accounting; bytes_per_scalar defaults to 2 to mirror
// half-precision deployment figures.
MemoryReport memory_report(const ZambaConfig& cfg, int64_t seq_len, int64_t bytes_per_scalar = 2);

}  // namespace zamba

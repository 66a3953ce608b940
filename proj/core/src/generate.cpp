#include "zamba/generate.hpp"

#include <algorithm>
#include <cmath>

namespace zamba {

namespace {

template <typename S>
void rmsnorm_row(const S* x, const S* w, S* y, int64_t n, S eps) {
    const S ms = detail::dotk(x, x, n) / static_cast<S>(n);
    const S rv = S(1) / std::sqrt(ms + eps);
    for (int64_t j = 0; j < n; ++j) y[j] = x[j] * w[j] * rv;
}

template <typename S>
void vecmat_accum(const S* v, const S* m, S* dst, int64_t rows, int64_t n) {
    for (int64_t r = 0; r < rows; ++r) {
        const S vr = v[r];
        const S* mr = m + r * n;
        for (int64_t j = 0; j < n; ++j) dst[j] += vr * mr[j];
    }
}

}  // namespace

template <typename S>
GenState<S> make_gen_state(const Model<S>& m) {
    GenState<S> st;
    st.blocks.reserve(m.blocks.size());
    for (const auto& blk : m.blocks) st.blocks.push_back(SsmState<S>::zero(blk));
    st.kv.resize(m.site_projs.size());
    return st;
}

template <typename S>
PrefillResult<S> prefill(const Model<S>& m, const TokenIds& prompt) {
    op_require(!prompt.empty(), "prefill", "prompt must hold at least one token");
    op_require(static_cast<int64_t>(prompt.size()) <= m.cfg.context_length, "prefill",
               "prompt length " + std::to_string(prompt.size()) + " exceeds context_length " +
                   std::to_string(m.cfg.context_length));
    NoGradGuard ng;
    const int64_t T = static_cast<int64_t>(prompt.size());
    ForwardCapture<S> cap;
    auto logits = model_forward(m, prompt, {T}, &cap);

    PrefillResult<S> out;
    out.state = make_gen_state(m);
    out.state.position = T;
    for (size_t l = 0; l < m.blocks.size(); ++l) {
        out.state.blocks[l].h = std::move(cap.blocks[l].h_final);
        out.state.blocks[l].conv_tail = std::move(cap.blocks[l].conv_tail);
    }
    const int64_t w2 = 2 * m.cfg.d_model;
    for (size_t s = 0; s < out.state.kv.size(); ++s) {
        out.state.kv[s].k = std::move(cap.sites[s].k);
        out.state.kv[s].v = std::move(cap.sites[s].v);
        out.state.kv[s].positions = static_cast<int64_t>(out.state.kv[s].k.size()) / w2;
    }
    const int64_t V = m.cfg.vocab_size;
    out.logits.assign(logits.data().end() - V, logits.data().end());
    return out;
}

template <typename S>
std::vector<S> step_decode(const Model<S>& m, GenState<S>& state, int32_t token) {
    const auto& cfg = m.cfg;
    op_require(token >= 0 && token < cfg.vocab_size, "step_decode",
               "token " + std::to_string(token) + " out of range [0," +
                   std::to_string(cfg.vocab_size) + ")");
    op_require(state.position < cfg.context_length, "step_decode",
               "cache full: position " + std::to_string(state.position) + " at context_length " +
                   std::to_string(cfg.context_length));
    op_require(state.blocks.size() == m.blocks.size() && state.kv.size() == m.site_projs.size(),
               "step_decode", "state does not match model layout");
    const int64_t d = cfg.d_model;
    const S eps = static_cast<S>(cfg.norm_eps);

    std::vector<S> x(m.embedding.data().begin() + token * d,
                     m.embedding.data().begin() + (token + 1) * d);
    const std::vector<S> x0 = x;

    const auto sites0 = site_block_indices(cfg);
    const auto opts = m.block_options();
    size_t next_site = 0;
    std::vector<S> inp(d), normed(d);
    for (size_t l = 0; l < m.blocks.size(); ++l) {
        if (next_site < sites0.size() && sites0[next_site] == static_cast<int64_t>(l)) {
            auto y = gsa_step(m.gsa, m.site_projs[next_site], x, x0, cfg.n_heads, eps, cfg.rope,
                              state.kv[next_site]);
            for (int64_t j = 0; j < d; ++j) inp[j] = x[j] + y[j];
            ++next_site;
        } else {
            inp = x;
        }
        rmsnorm_row(inp.data(), m.block_norms[l].data().data(), normed.data(), d, eps);
        auto out = mamba_step(m.blocks[l], state.blocks[l], normed, opts);
        for (int64_t j = 0; j < d; ++j) x[j] += out[j];
    }

    std::vector<S> xn(d);
    rmsnorm_row(x.data(), m.final_norm.data().data(), xn.data(), d, eps);
    std::vector<S> logits(cfg.vocab_size, S(0));
    if (m.head.defined()) {
        vecmat_accum(xn.data(), m.head.data().data(), logits.data(), d, cfg.vocab_size);
    } else {
        for (int64_t vtok = 0; vtok < cfg.vocab_size; ++vtok)
            logits[vtok] = detail::dotk(xn.data(), m.embedding.data().data() + vtok * d, d);
    }
    state.position += 1;
    return logits;
}

template <typename S>
int32_t sample_token(const std::vector<S>& logits, const SamplerSpec& spec, Rng& rng) {
    op_require(!logits.empty(), "sample_token", "empty logits");
    if (spec.kind == SamplerSpec::Kind::greedy) {
        size_t best = 0;
        for (size_t i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[best]) best = i;
        return static_cast<int32_t>(best);
    }
    op_require(spec.temperature > 0.0, "sample_token", "temperature must be > 0");
    const double inv_t = 1.0 / spec.temperature;
    double mx = -std::numeric_limits<double>::infinity();
    for (S v : logits) mx = std::max(mx, static_cast<double>(v));
    std::vector<double> probs(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp((static_cast<double>(logits[i]) - mx) * inv_t);
        sum += probs[i];
    }
    const double u = rng.next_double() * sum;
    double cum = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return static_cast<int32_t>(i);
    }
    return static_cast<int32_t>(probs.size() - 1);
}

template <typename S>
GenerateResult<S> generate(const Model<S>& m, const TokenIds& prompt, int64_t n,
                           const SamplerSpec& spec, bool with_trace) {
    GenerateResult<S> out;
    auto pre = prefill(m, prompt);
    Rng rng = Rng::stream(spec.seed, 0x9a9);
    std::vector<S> logits = std::move(pre.logits);
    for (int64_t i = 0; i < n; ++i) {
        const int32_t tok = sample_token(logits, spec, rng);
        if (with_trace) {
            TraceEntry<S> e;
            e.position = pre.state.position;
            e.token = tok;
            std::vector<std::pair<int32_t, S>> all;
            all.reserve(logits.size());
            for (size_t j = 0; j < logits.size(); ++j)
                all.emplace_back(static_cast<int32_t>(j), logits[j]);
            std::partial_sort(all.begin(), all.begin() + std::min<size_t>(5, all.size()), all.end(),
                              [](auto& a, auto& b) { return a.second > b.second; });
            all.resize(std::min<size_t>(5, all.size()));
            e.top5 = std::move(all);
            out.trace.push_back(std::move(e));
        }
        out.tokens.push_back(tok);
        if (i + 1 < n) logits = step_decode(m, pre.state, tok);
    }
    return out;
}

MemoryReport memory_report(const ZambaConfig& cfg, int64_t seq_len, int64_t bytes_per_scalar) {
    op_require(seq_len >= 0, "memory_report", "seq_len must be >= 0");
    op_require(bytes_per_scalar >= 1, "memory_report", "bytes_per_scalar must be >= 1");
    MemoryReport r;
    const int64_t sites = cfg.n_sites();
    r.sites = sites;
    const int64_t di = cfg.d_inner();
    r.ssm_state_bytes =
        cfg.n_layers * di * cfg.d_state * bytes_per_scalar +
        cfg.n_layers * di * (cfg.d_conv - 1) * bytes_per_scalar;
    r.kv_bytes = sites * 2 * (2 * cfg.d_model) * seq_len * bytes_per_scalar;
    r.baseline_kv_bytes = cfg.n_layers * 2 * cfg.d_model * seq_len * bytes_per_scalar;
    // per-token rates, so the ratio is defined at seq_len = 0 as well
    const double kv_rate = static_cast<double>(sites * 2 * (2 * cfg.d_model));
    const double base_rate = static_cast<double>(cfg.n_layers * 2 * cfg.d_model);
    r.kv_ratio_vs_baseline = base_rate > 0.0 ? kv_rate / base_rate : 0.0;
    return r;
}

#define ZAMBA_GEN_INST(S)                                                                       \
    template GenState<S> make_gen_state<S>(const Model<S>&);                                    \
    template PrefillResult<S> prefill<S>(const Model<S>&, const TokenIds&);                     \
    template std::vector<S> step_decode<S>(const Model<S>&, GenState<S>&, int32_t);             \
    template int32_t sample_token<S>(const std::vector<S>&, const SamplerSpec&, Rng&);          \
    template GenerateResult<S> generate<S>(const Model<S>&, const TokenIds&, int64_t,           \
                                           const SamplerSpec&, bool);

ZAMBA_GEN_INST(float)
ZAMBA_GEN_INST(double)
#undef ZAMBA_GEN_INST

}  // namespace zamba

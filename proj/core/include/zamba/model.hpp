#pragma once

// Model assembly: token embedding, L Mamba blocks around a residual stream,
// one shared attention block invoked every gsa_period Mamba blocks with
// per-site output projections, final norm and LM head. The layer recursion
// at a site is x_{l+1} = x_l + Mamba(Norm(x_l + y_l)) with y_l the shared
// attention output; elsewhere y_l = 0.

#include <string>
#include <utility>
#include <vector>

#include "zamba/attention.hpp"
#include "zamba/mamba.hpp"

namespace zamba {

enum class Precision { f32, f64 };

struct ZambaConfig {
    int64_t vocab_size = 258;
    int64_t d_model = 128;
    int64_t n_layers = 12;
    int64_t gsa_period = 3;  // shared-attention site every N Mamba blocks
    int64_t d_state = 16;
    int64_t d_conv = 4;
    int64_t n_heads = 4;
    int64_t expand_factor = 2;
    int64_t dt_rank = 0;     // 0 -> ceil(d_model / 16)
    int64_t mlp_hidden = 0;  // 0 -> 4 * d_model
    int64_t context_length = 4096;
    uint64_t seed = 1;
    Precision precision = Precision::f32;
    InputDisc input_discretization = InputDisc::euler;
    ScanMode scan_mode = ScanMode::sequential;
    bool rope = false;
    bool sites_from_zero = false;  // place sites before blocks 1, N+1, ... instead of N, 2N, ...
    bool tie_embeddings = false;
    bool use_d_skip = true;
    double norm_eps = 1e-5;

    int64_t d_inner() const { return expand_factor * d_model; }
    int64_t dt_rank_eff() const { return dt_rank > 0 ? dt_rank : (d_model + 15) / 16; }
    int64_t mlp_hidden_eff() const { return mlp_hidden > 0 ? mlp_hidden : 4 * d_model; }
    int64_t n_sites() const { return n_layers / gsa_period; }

    void validate() const;  // throws std::invalid_argument naming the bad field
};

// 1-based indices of the Mamba blocks preceded by a shared-attention call:
// {N, 2N, ..., floor(L/N)*N}. L < N yields an empty list (pure Mamba).
std::vector<int64_t> gsa_sites(int64_t n_layers, int64_t gsa_period);

// 0-based block indices used internally, honoring sites_from_zero.
std::vector<int64_t> site_block_indices(const ZambaConfig& cfg);

template <typename S>
struct Model {
    ZambaConfig cfg;
    Tensor<S> embedding;                 // [V, d]
    std::vector<Tensor<S>> block_norms;  // L x [d]
    std::vector<MambaParams<S>> blocks;  // L
    GsaParams<S> gsa;                    // single shared bundle; undefined when no sites
    std::vector<Tensor<S>> site_projs;   // n_sites x [d, d], unshared
    Tensor<S> final_norm;                // [d]
    Tensor<S> head;                      // [d, V]; undefined when tied to the embedding

    // Stable registry; the shared attention bundle appears exactly once.
    std::vector<std::pair<std::string, Tensor<S>>> named_params() const;
    BlockOptions block_options() const {
        return {cfg.scan_mode, cfg.input_discretization, cfg.use_d_skip};
    }
    void zero_grads() const;
};

// Deterministic initialization: per-parameter streams are derived from
// (seed, parameter name), so the same seed gives bit-identical tensors.
template <typename S>
Model<S> build_model(const ZambaConfig& cfg);

template <typename S>
struct ForwardCapture {
    std::vector<MambaStateCapture<S>> blocks;  // per block
    std::vector<GsaKvCapture<S>> sites;        // per site
};

// Next-token logits for every position; tokens are [B, T] (or [T]) within
// the vocab, T bounded by context_length.
template <typename S>
Tensor<S> model_forward(const Model<S>& m, const TokenIds& tokens, Shape id_shape,
                        ForwardCapture<S>* capture = nullptr);

struct ParamCount {
    int64_t total = 0;
    int64_t gsa = 0;        // shared attention bundle, counted once
    int64_t site_proj = 0;  // per-site projections
    double shared_attention_fraction = 0.0;
};

template <typename S>
ParamCount count_params(const Model<S>& m);

// Closed-form count for a config; must agree with count_params exactly.
int64_t param_count_formula(const ZambaConfig& cfg);

}  // namespace zamba

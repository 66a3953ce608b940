#pragma once

// Global shared attention block. One parameter bundle serves every
// invocation site in the model; the per-site output projection is the only
// unshared piece and lives with the caller. The block input is the
// concatenation of the residual activations with the post-embedding
// activations, so Q/K/V operate at twice the residual width and the
// attention out-projection brings the result back down before the MLP.

#include "zamba/tensor.hpp"

namespace zamba {

template <typename S>
struct GsaParams {
    Tensor<S> qkv_proj;       // [2d, 6d] -> Q,K,V each of width 2d
    Tensor<S> attn_out_proj;  // [2d, d]
    Tensor<S> mlp_in;         // [d, mlp_hidden]
    Tensor<S> mlp_out;        // [mlp_hidden, d]
    Tensor<S> norm_concat;    // [2d]
    Tensor<S> norm_premlp;    // [d]

    static GsaParams create(int64_t d_model, int64_t mlp_hidden, bool requires_grad = true);

    bool defined() const { return qkv_proj.defined(); }
    int64_t d_model() const { return attn_out_proj.dim(1); }
    int64_t mlp_hidden() const { return mlp_in.dim(1); }
};

// Standard causal multi-head softmax attention over [..., T, W] inputs;
// heads are contiguous column groups of width W / n_heads.
template <typename S>
Tensor<S> causal_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                           int64_t n_heads);

// K/V rows captured after the shared QKV projection; prefill hands them to
// the generation cache so the concatenated inputs never need storing.
template <typename S>
struct GsaKvCapture {
    std::vector<S> k, v;  // B * T rows of width 2d
};

template <typename S>
Tensor<S> gsa_forward(const GsaParams<S>& shared, const Tensor<S>& site_proj,
                      const Tensor<S>& x_l, const Tensor<S>& x_0, int64_t n_heads, S eps,
                      bool rope = false, GsaKvCapture<S>* capture = nullptr);

// Append-only K/V cache for one invocation site.
template <typename S>
struct KvSlot {
    std::vector<S> k, v;  // positions rows of width 2d
    int64_t positions = 0;
    size_t bytes() const { return (k.size() + v.size()) * sizeof(S); }
};

// One decode step at one site: appends this position's K/V rows and attends
// over everything cached so far.
template <typename S>
std::vector<S> gsa_step(const GsaParams<S>& shared, const Tensor<S>& site_proj,
                        const std::vector<S>& x_l_row, const std::vector<S>& x0_row,
                        int64_t n_heads, S eps, bool rope, KvSlot<S>& cache);

}  // namespace zamba

#pragma once

// Mamba block: in_proj splits the input into a processed path and a gate
// path; the processed path goes through a causal depthwise convolution and
// SiLU, produces the input-dependent delta/B/C, and feeds the selective
// scan. The scan output (plus the per-channel D passthrough of the conv
// activations) is gated by SiLU of the gate path and projected back out.

#include "zamba/scan.hpp"
#include "zamba/tensor.hpp"

namespace zamba {

template <typename S>
struct MambaParams {
    Tensor<S> in_proj;      // [d_model, 2*d_inner]
    Tensor<S> conv_kernel;  // [d_inner, d_conv]
    Tensor<S> x_proj;       // [d_inner, dt_rank + 2*d_state]
    Tensor<S> dt_proj_w;    // [dt_rank, d_inner]
    Tensor<S> dt_proj_b;    // [d_inner]
    Tensor<S> A_log;        // [d_inner, d_state]; A = -exp(A_log)
    Tensor<S> D_skip;       // [d_inner]
    Tensor<S> out_proj;     // [d_inner, d_model]

    static MambaParams create(int64_t d_model, int64_t d_inner, int64_t d_state, int64_t d_conv,
                              int64_t dt_rank, bool requires_grad = true);

    int64_t d_model() const { return in_proj.dim(0); }
    int64_t d_inner() const { return out_proj.dim(0); }
    int64_t d_state() const { return A_log.dim(1); }
    int64_t d_conv() const { return conv_kernel.dim(1); }
    int64_t dt_rank() const { return dt_proj_w.dim(0); }
};

// Recurrent-mode state: fixed-size SSM memory plus the pre-conv input tail.
template <typename S>
struct SsmState {
    std::vector<S> h;          // d_inner * d_state
    std::vector<S> conv_tail;  // (d_conv - 1) rows of d_inner, oldest first
    int64_t d_inner = 0, d_state = 0, d_conv = 0;

    static SsmState zero(const MambaParams<S>& p) {
        SsmState s;
        s.d_inner = p.d_inner();
        s.d_state = p.d_state();
        s.d_conv = p.d_conv();
        s.h.assign(s.d_inner * s.d_state, S(0));
        s.conv_tail.assign((s.d_conv - 1) * s.d_inner, S(0));
        return s;
    }
    size_t bytes() const { return (h.size() + conv_tail.size()) * sizeof(S); }
};

struct BlockOptions {
    ScanMode scan_mode = ScanMode::sequential;
    InputDisc input_disc = InputDisc::euler;
    bool use_d_skip = true;
};

// Snapshot of the recurrent state implied by a batch forward, one entry per
// batch row; used by prefill.
template <typename S>
struct MambaStateCapture {
    std::vector<S> h_final;    // B * d_inner * d_state
    std::vector<S> conv_tail;  // B * (d_conv-1) * d_inner
};

template <typename S>
Tensor<S> mamba_block_forward(const MambaParams<S>& params, const Tensor<S>& x,
                              const BlockOptions& opts = {},
                              MambaStateCapture<S>* capture = nullptr);

// One token of the block in recurrent mode; state is advanced in place.
// Feeding a sequence token-by-token reproduces the batch forward.
template <typename S>
std::vector<S> mamba_step(const MambaParams<S>& params, SsmState<S>& state,
                          const std::vector<S>& x_t, const BlockOptions& opts = {});

}  // namespace zamba

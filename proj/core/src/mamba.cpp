#include "zamba/mamba.hpp"

#include <algorithm>
#include <cmath>

namespace zamba {

template <typename S>
MambaParams<S> MambaParams<S>::create(int64_t d_model, int64_t d_inner, int64_t d_state,
                                      int64_t d_conv, int64_t dt_rank, bool requires_grad) {
    op_require(d_model >= 1 && d_inner >= 1 && d_state >= 1 && d_conv >= 1 && dt_rank >= 1,
               "mamba_params", "all dimensions must be >= 1");
    MambaParams<S> p;
    p.in_proj = Tensor<S>::zeros({d_model, 2 * d_inner}, requires_grad);
    p.conv_kernel = Tensor<S>::zeros({d_inner, d_conv}, requires_grad);
    p.x_proj = Tensor<S>::zeros({d_inner, dt_rank + 2 * d_state}, requires_grad);
    p.dt_proj_w = Tensor<S>::zeros({dt_rank, d_inner}, requires_grad);
    p.dt_proj_b = Tensor<S>::zeros({d_inner}, requires_grad);
    p.A_log = Tensor<S>::zeros({d_inner, d_state}, requires_grad);
    p.D_skip = Tensor<S>::zeros({d_inner}, requires_grad);
    p.out_proj = Tensor<S>::zeros({d_inner, d_model}, requires_grad);
    return p;
}

template <typename S>
Tensor<S> mamba_block_forward(const MambaParams<S>& params, const Tensor<S>& x,
                              const BlockOptions& opts, MambaStateCapture<S>* capture) {
    const int64_t d = params.d_model();
    const int64_t di = params.d_inner();
    const int64_t ds = params.d_state();
    const int64_t k = params.d_conv();
    const int64_t dtr = params.dt_rank();
    op_require(x.ndim() >= 2 && x.dim(-1) == d, "mamba_block",
               "input " + shape_str(x.shape()) + " does not match d_model " + std::to_string(d));

    auto xz = matmul(x, params.in_proj);
    auto xin = slice_lastdim(xz, 0, di);
    auto gate = slice_lastdim(xz, di, di);

    auto cact = silu(conv1d_causal(xin, params.conv_kernel));

    auto proj = matmul(cact, params.x_proj);
    auto dt_raw = slice_lastdim(proj, 0, dtr);
    auto b_seq = slice_lastdim(proj, dtr, ds);
    auto c_seq = slice_lastdim(proj, dtr + ds, ds);
    auto delta = softplus(add(matmul(dt_raw, params.dt_proj_w), params.dt_proj_b));

    auto a_mat = scale(exp(params.A_log), S(-1));
    auto scan = selective_scan(delta, a_mat, b_seq, c_seq, cact, {}, opts.scan_mode, opts.input_disc);

    auto ycore = opts.use_d_skip ? add(scan.y, mul(cact, params.D_skip)) : scan.y;
    auto out = matmul(mul(ycore, silu(gate)), params.out_proj);

    if (capture) {
        const int64_t T = x.dim(-2);
        const int64_t B = x.numel() / (T * d);
        capture->h_final = scan.h_final.data();
        capture->conv_tail.assign(B * (k - 1) * di, S(0));
        // newest history rows of the pre-conv path, zero-filled when T < k-1
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t j = 0; j < k - 1; ++j) {
                const int64_t src_t = T - (k - 1) + j;
                if (src_t < 0) continue;
                std::copy_n(xin.data().data() + (b * T + src_t) * di, di,
                            capture->conv_tail.data() + (b * (k - 1) + j) * di);
            }
        }
    }
    return out;
}

namespace {

// dst[n] += v . m  for m [rows, n] row-major, accumulating in row order to
// match the gemm used by the batch path.
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
std::vector<S> mamba_step(const MambaParams<S>& params, SsmState<S>& state,
                          const std::vector<S>& x_t, const BlockOptions& opts) {
    const int64_t d = params.d_model();
    const int64_t di = params.d_inner();
    const int64_t ds = params.d_state();
    const int64_t k = params.d_conv();
    const int64_t dtr = params.dt_rank();
    op_require(static_cast<int64_t>(x_t.size()) == d, "mamba_step",
               "input size " + std::to_string(x_t.size()) + " does not match d_model " +
                   std::to_string(d));
    op_require(state.d_inner == di && state.d_state == ds && state.d_conv == k, "mamba_step",
               "state dimensions do not match parameters");

    std::vector<S> xz(2 * di, S(0));
    vecmat_accum(x_t.data(), params.in_proj.data().data(), xz.data(), d, 2 * di);
    const S* xin = xz.data();
    const S* gate = xz.data() + di;

    // causal conv over [conv_tail..., xin]; kernel column k-1 hits the
    // current input
    std::vector<S> cact(di);
    const S* ker = params.conv_kernel.data().data();
    for (int64_t c = 0; c < di; ++c) {
        S acc = 0;
        for (int64_t j = 0; j < k - 1; ++j) acc += ker[c * k + j] * state.conv_tail[j * di + c];
        acc += ker[c * k + (k - 1)] * xin[c];
        cact[c] = acc * detail::fsigmoid(acc);
    }
    // advance the tail by one position
    if (k > 1) {
        std::copy(state.conv_tail.begin() + di, state.conv_tail.end(), state.conv_tail.begin());
        std::copy_n(xin, di, state.conv_tail.end() - di);
    }

    std::vector<S> proj(dtr + 2 * ds, S(0));
    vecmat_accum(cact.data(), params.x_proj.data().data(), proj.data(), di, dtr + 2 * ds);
    const S* b_row = proj.data() + dtr;
    const S* c_row = proj.data() + dtr + ds;

    std::vector<S> delta(di, S(0));
    vecmat_accum(proj.data(), params.dt_proj_w.data().data(), delta.data(), dtr, di);
    const S* dtb = params.dt_proj_b.data().data();
    for (int64_t i = 0; i < di; ++i) {
        const S v = delta[i] + dtb[i];
        delta[i] = v > S(20) ? v : std::log1p(detail::fexp(v));
    }

    const S* alog = params.A_log.data().data();
    const S* dsk = params.D_skip.data().data();
    const bool euler = opts.input_disc == InputDisc::euler;
    std::vector<S> gated(di);
    for (int64_t i = 0; i < di; ++i) {
        const S dv = delta[i];
        const S coef = (euler ? dv : S(1)) * cact[i];
        S* hrow = state.h.data() + i * ds;
        const S* arow = alog + i * ds;
        S y = 0;
        for (int64_t n = 0; n < ds; ++n) {
            hrow[n] = detail::fexp(-detail::fexp(arow[n]) * dv) * hrow[n] + coef * b_row[n];
            y += c_row[n] * hrow[n];
        }
        if (opts.use_d_skip) y += dsk[i] * cact[i];
        const S gv = gate[i];
        gated[i] = y * gv * detail::fsigmoid(gv);
    }

    std::vector<S> out(d, S(0));
    vecmat_accum(gated.data(), params.out_proj.data().data(), out.data(), di, d);
    return out;
}

template struct MambaParams<float>;
template struct MambaParams<double>;
template Tensor<float> mamba_block_forward<float>(const MambaParams<float>&, const Tensor<float>&,
                                                  const BlockOptions&, MambaStateCapture<float>*);
template Tensor<double> mamba_block_forward<double>(const MambaParams<double>&,
                                                    const Tensor<double>&, const BlockOptions&,
                                                    MambaStateCapture<double>*);
template std::vector<float> mamba_step<float>(const MambaParams<float>&, SsmState<float>&,
                                              const std::vector<float>&, const BlockOptions&);
template std::vector<double> mamba_step<double>(const MambaParams<double>&, SsmState<double>&,
                                                const std::vector<double>&, const BlockOptions&);

}  // namespace zamba

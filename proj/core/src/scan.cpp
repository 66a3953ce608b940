#include "zamba/scan.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace zamba {

namespace {

struct ScanDims {
    int64_t B, T, di, ds;
    bool batched;  // delta had a leading batch dim
};

template <typename S>
ScanDims check_scan_shapes(const char* op, const Tensor<S>& delta, const Tensor<S>& A,
                           const Tensor<S>& B_seq, const Tensor<S>& C_seq, const Tensor<S>& x,
                           const Tensor<S>& h0) {
    op_require(delta.ndim() >= 2, op, "delta must be [...,T,d_inner], got " + shape_str(delta.shape()));
    op_require(A.ndim() == 2, op, "A must be [d_inner,d_state], got " + shape_str(A.shape()));
    ScanDims d{};
    d.di = delta.dim(-1);
    d.T = delta.dim(-2);
    d.B = delta.numel() / (d.T * d.di);
    d.ds = A.dim(1);
    d.batched = delta.ndim() > 2;
    op_require(d.T >= 1, op, "sequence length must be >= 1");
    op_require(A.dim(0) == d.di, op,
               "A " + shape_str(A.shape()) + " does not match delta " + shape_str(delta.shape()));
    op_require(x.shape() == delta.shape(), op,
               "x " + shape_str(x.shape()) + " does not match delta " + shape_str(delta.shape()));
    op_require(B_seq.numel() == d.B * d.T * d.ds && B_seq.dim(-1) == d.ds, op,
               "B_seq " + shape_str(B_seq.shape()) + " inconsistent with [B,T,d_state]");
    op_require(C_seq.numel() == d.B * d.T * d.ds && C_seq.dim(-1) == d.ds, op,
               "C_seq " + shape_str(C_seq.shape()) + " inconsistent with [B,T,d_state]");
    if (h0.defined())
        op_require(h0.numel() == d.B * d.di * d.ds, op,
                   "h0 " + shape_str(h0.shape()) + " inconsistent with [B,d_inner,d_state]");
    for (S v : delta.data())
        op_require(v > S(0), op, "delta must be strictly positive");
    return d;
}

// Blelloch exclusive scan in place over pairs (a[t][.], b[t][.]), then folded
// to the inclusive form. L values per time step are scanned independently.
template <typename S>
void blelloch_pairs(std::vector<S>& a, std::vector<S>& b, int64_t Tp, int64_t L) {
    // up-sweep
    for (int64_t stride = 1; stride < Tp; stride *= 2) {
        for (int64_t right = 2 * stride - 1; right < Tp; right += 2 * stride) {
            const int64_t left = right - stride;
            S* al = a.data() + left * L;
            S* bl = b.data() + left * L;
            S* ar = a.data() + right * L;
            S* br = b.data() + right * L;
            // (al,bl) o (ar,br) stored at right
            for (int64_t v = 0; v < L; ++v) {
                br[v] = ar[v] * bl[v] + br[v];
                ar[v] = al[v] * ar[v];
            }
        }
    }
    // root <- identity
    std::fill_n(a.data() + (Tp - 1) * L, L, S(1));
    std::fill_n(b.data() + (Tp - 1) * L, L, S(0));
    // down-sweep: each node receives the prefix of everything before it
    for (int64_t stride = Tp / 2; stride >= 1; stride /= 2) {
        for (int64_t right = 2 * stride - 1; right < Tp; right += 2 * stride) {
            const int64_t left = right - stride;
            S* al = a.data() + left * L;
            S* bl = b.data() + left * L;
            S* ar = a.data() + right * L;
            S* br = b.data() + right * L;
            for (int64_t v = 0; v < L; ++v) {
                const S ta = al[v], tb = bl[v];
                al[v] = ar[v];
                bl[v] = br[v];
                // incoming-prefix o left-subtree-sum
                br[v] = ta * br[v] + tb;
                ar[v] = ar[v] * ta;
            }
        }
    }
}

}  // namespace

template <typename S>
ScanResult<S> selective_scan(const Tensor<S>& delta, const Tensor<S>& A, const Tensor<S>& B_seq,
                             const Tensor<S>& C_seq, const Tensor<S>& x, const Tensor<S>& h0,
                             ScanMode mode, InputDisc disc) {
    const char* op = mode == ScanMode::sequential ? "selective_scan_sequential" : "selective_scan_parallel";
    detail::check_inputs<S>(op, {&delta, &A, &B_seq, &C_seq, &x});
    const ScanDims dm = check_scan_shapes(op, delta, A, B_seq, C_seq, x, h0);
    const int64_t B = dm.B, T = dm.T, di = dm.di, ds = dm.ds, L = di * ds;
    const bool euler = disc == InputDisc::euler;

    const S* dd = delta.data().data();
    const S* Ad = A.data().data();
    const S* Bd = B_seq.data().data();
    const S* Cd = C_seq.data().data();
    const S* xd = x.data().data();
    const S* h0d = h0.defined() ? h0.data().data() : nullptr;

    auto y = Tensor<S>::zeros(delta.shape());
    Shape hshape = dm.batched ? Shape{B, di, ds} : Shape{di, ds};
    auto h_final = Tensor<S>::zeros(std::move(hshape));
    S* yd = y.data().data();
    S* hf = h_final.data().data();

    // h and a for every step are kept for the adjoint pass.
    auto h_all = detail::uninit_array<S>(B * T * L);
    auto a_all = detail::uninit_array<S>(B * T * L);

    for (int64_t b = 0; b < B; ++b) {
        S* hb = h_all.get() + b * T * L;
        S* ab = a_all.get() + b * T * L;
        // decay factors and input increments
        for (int64_t t = 0; t < T; ++t) {
            const S* drow = dd + (b * T + t) * di;
            const S* brow = Bd + (b * T + t) * ds;
            const S* xrow = xd + (b * T + t) * di;
            S* at = ab + t * L;
            S* bt = hb + t * L;  // h_all doubles as the b-term buffer before the scan
            for (int64_t i = 0; i < di; ++i) {
                const S dv = drow[i];
                const S coef = (euler ? dv : S(1)) * xrow[i];
                const S* Ai = Ad + i * ds;
                S* ati = at + i * ds;
                S* bti = bt + i * ds;
                for (int64_t n = 0; n < ds; ++n) {
                    ati[n] = detail::fexp(Ai[n] * dv);
                    bti[n] = coef * brow[n];
                }
            }
        }
        if (mode == ScanMode::sequential) {
            // h_t = a_t (*) h_{t-1} + b_t, in place over the b-term buffer
            for (int64_t t = 0; t < T; ++t) {
                const S* prev = t > 0 ? hb + (t - 1) * L : h0d ? h0d + b * L : nullptr;
                S* ht = hb + t * L;
                const S* at = ab + t * L;
                if (prev) {
                    for (int64_t v = 0; v < L; ++v) ht[v] += at[v] * prev[v];
                }
            }
        } else {
            const int64_t Tp = static_cast<int64_t>(std::bit_ceil(static_cast<uint64_t>(T)));
            std::vector<S> ap(Tp * L, S(1)), bp(Tp * L, S(0));
            std::copy_n(ab, T * L, ap.data());
            std::copy_n(hb, T * L, bp.data());
            blelloch_pairs(ap, bp, Tp, L);
            // fold exclusive prefix with the element itself, then apply h0
            for (int64_t t = 0; t < T; ++t) {
                const S* ea = ap.data() + t * L;
                const S* eb = bp.data() + t * L;
                const S* at = ab + t * L;
                S* ht = hb + t * L;
                if (h0d) {
                    const S* h0b = h0d + b * L;
                    for (int64_t v = 0; v < L; ++v) {
                        const S pa = ea[v] * at[v];
                        const S pb = at[v] * eb[v] + ht[v];
                        ht[v] = pa * h0b[v] + pb;
                    }
                } else {
                    for (int64_t v = 0; v < L; ++v) ht[v] = at[v] * eb[v] + ht[v];
                }
            }
        }
        // y_t = C_t . h_t
        for (int64_t t = 0; t < T; ++t) {
            const S* crow = Cd + (b * T + t) * ds;
            const S* ht = hb + t * L;
            S* yrow = yd + (b * T + t) * di;
            for (int64_t i = 0; i < di; ++i) yrow[i] = detail::dotk(crow, ht + i * ds, ds);
        }
        std::copy_n(hb + (T - 1) * L, L, hf + b * L);
    }

    if (detail::autograd_needed<S>({&delta, &A, &B_seq, &C_seq, &x, &h0})) {
        std::vector<Tensor<S>> parents = {delta, A, B_seq, C_seq, x};
        if (h0.defined()) parents.push_back(h0);
        auto di_ = delta.impl_;
        auto Ai_ = A.impl_;
        auto Bi_ = B_seq.impl_;
        auto Ci_ = C_seq.impl_;
        auto xi_ = x.impl_;
        auto h0i_ = h0.defined() ? h0.impl_ : nullptr;
        detail::attach_node<S>(
            y, op, std::move(parents),
            [=](const TensorImpl<S>& o) {
                const S* dy = o.grad.data();
                const S* dd2 = di_->data.data();
                const S* Ad2 = Ai_->data.data();
                const S* Bd2 = Bi_->data.data();
                const S* Cd2 = Ci_->data.data();
                const S* xd2 = xi_->data.data();
                const S* h0d2 = h0i_ ? h0i_->data.data() : nullptr;
                S* g_delta = di_->requires_grad ? detail::ensure_grad(*di_).data() : nullptr;
                S* g_A = Ai_->requires_grad ? detail::ensure_grad(*Ai_).data() : nullptr;
                S* g_B = Bi_->requires_grad ? detail::ensure_grad(*Bi_).data() : nullptr;
                S* g_C = Ci_->requires_grad ? detail::ensure_grad(*Ci_).data() : nullptr;
                S* g_x = xi_->requires_grad ? detail::ensure_grad(*xi_).data() : nullptr;
                S* g_h0 = (h0i_ && h0i_->requires_grad) ? detail::ensure_grad(*h0i_).data() : nullptr;

                std::vector<S> gh(L);
                for (int64_t b = 0; b < B; ++b) {
                    const S* hb = h_all.get() + b * T * L;
                    const S* ab = a_all.get() + b * T * L;
                    std::fill(gh.begin(), gh.end(), S(0));
                    for (int64_t t = T - 1; t >= 0; --t) {
                        const S* dyrow = dy + (b * T + t) * di;
                        const S* crow = Cd2 + (b * T + t) * ds;
                        const S* brow = Bd2 + (b * T + t) * ds;
                        const S* drow = dd2 + (b * T + t) * di;
                        const S* xrow = xd2 + (b * T + t) * di;
                        const S* ht = hb + t * L;
                        const S* at = ab + t * L;
                        const S* hprev = t > 0 ? hb + (t - 1) * L : h0d2 ? h0d2 + b * L : nullptr;
                        S* gB_row = g_B ? g_B + (b * T + t) * ds : nullptr;
                        S* gC_row = g_C ? g_C + (b * T + t) * ds : nullptr;
                        for (int64_t i = 0; i < di; ++i) {
                            const S dyv = dyrow[i];
                            const S dv = drow[i];
                            const S xv = xrow[i];
                            const S dhat = euler ? dv : S(1);
                            const S* Arow = Ad2 + i * ds;
                            const S* hrow = ht + i * ds;
                            const S* arow = at + i * ds;
                            const S* hprow = hprev ? hprev + i * ds : nullptr;
                            S* ghrow = gh.data() + i * ds;
                            S ddelta = 0, dxv = 0;
                            for (int64_t n = 0; n < ds; ++n) {
                                // y_t contribution into h_t
                                S g = ghrow[n] + crow[n] * dyv;
                                if (gC_row) gC_row[n] += dyv * hrow[n];
                                const S hp = hprow ? hprow[n] : S(0);
                                // decay term a = exp(A*delta)
                                const S da = g * hp * arow[n];
                                if (g_A) g_A[i * ds + n] += da * dv;
                                ddelta += da * Arow[n];
                                // input term dhat * B * x
                                if (euler) ddelta += g * brow[n] * xv;
                                if (gB_row) gB_row[n] += g * dhat * xv;
                                dxv += g * brow[n];
                                ghrow[n] = arow[n] * g;  // flows to h_{t-1}
                            }
                            if (g_delta) g_delta[(b * T + t) * di + i] += ddelta;
                            if (g_x) g_x[(b * T + t) * di + i] += dxv * dhat;
                        }
                    }
                    if (g_h0) {
                        S* gh0 = g_h0 + b * L;
                        for (int64_t v = 0; v < L; ++v) gh0[v] += gh[v];
                    }
                }
            });
    }
    return {std::move(y), std::move(h_final)};
}

template ScanResult<float> selective_scan<float>(const Tensor<float>&, const Tensor<float>&,
                                                 const Tensor<float>&, const Tensor<float>&,
                                                 const Tensor<float>&, const Tensor<float>&,
                                                 ScanMode, InputDisc);
template ScanResult<double> selective_scan<double>(const Tensor<double>&, const Tensor<double>&,
                                                   const Tensor<double>&, const Tensor<double>&,
                                                   const Tensor<double>&, const Tensor<double>&,
                                                   ScanMode, InputDisc);

}  // namespace zamba

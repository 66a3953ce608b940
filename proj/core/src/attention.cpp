#include "zamba/attention.hpp"

#include <algorithm>
#include <cmath>

#include "zamba/parallel.hpp"

namespace zamba {

template <typename S>
GsaParams<S> GsaParams<S>::create(int64_t d_model, int64_t mlp_hidden, bool requires_grad) {
    op_require(d_model >= 1 && mlp_hidden >= 1, "gsa_params", "dimensions must be >= 1");
    GsaParams<S> p;
    p.qkv_proj = Tensor<S>::zeros({2 * d_model, 6 * d_model}, requires_grad);
    p.attn_out_proj = Tensor<S>::zeros({2 * d_model, d_model}, requires_grad);
    p.mlp_in = Tensor<S>::zeros({d_model, mlp_hidden}, requires_grad);
    p.mlp_out = Tensor<S>::zeros({mlp_hidden, d_model}, requires_grad);
    p.norm_concat = Tensor<S>::zeros({2 * d_model}, requires_grad);
    p.norm_premlp = Tensor<S>::zeros({d_model}, requires_grad);
    return p;
}

template <typename S>
Tensor<S> causal_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                           int64_t n_heads) {
    detail::check_inputs<S>("causal_attention", {&q, &k, &v});
    op_require(q.ndim() >= 2, "causal_attention",
               "q must be [...,T,W], got " + shape_str(q.shape()));
    op_require(q.shape() == k.shape() && q.shape() == v.shape(), "causal_attention",
               "q/k/v shape mismatch " + shape_str(q.shape()) + " vs " + shape_str(k.shape()) +
                   " vs " + shape_str(v.shape()));
    const int64_t W = q.dim(-1), T = q.dim(-2);
    op_require(n_heads >= 1 && W % n_heads == 0, "causal_attention",
               "width " + std::to_string(W) + " not divisible by " + std::to_string(n_heads) +
                   " heads");
    const int64_t B = q.numel() / (T * W);
    const int64_t hd = W / n_heads;
    const S inv_scale = S(1) / std::sqrt(static_cast<S>(hd));

    auto out = Tensor<S>::zeros(q.shape());
    const bool needs_grad = detail::autograd_needed<S>({&q, &k, &v});
    // row-softmax weights, saved only when the backward pass will need them
    auto probs = needs_grad ? detail::uninit_array<S>(B * n_heads * T * T) : nullptr;

    const S* qd = q.data().data();
    const S* kd = k.data().data();
    const S* vd = v.data().data();
    S* od = out.data().data();

    parallel_for(0, B * n_heads, [&](int64_t u0, int64_t u1) {
        std::vector<S> row(T);
        for (int64_t u = u0; u < u1; ++u) {
            const int64_t b = u / n_heads, h = u % n_heads;
            const int64_t col = h * hd;
            for (int64_t i = 0; i < T; ++i) {
                const S* qi = qd + (b * T + i) * W + col;
                S mx = -std::numeric_limits<S>::infinity();
                for (int64_t j = 0; j <= i; ++j) {
                    row[j] = detail::dotk(qi, kd + (b * T + j) * W + col, hd) * inv_scale;
                    mx = std::max(mx, row[j]);
                }
                S sum = 0;
                for (int64_t j = 0; j <= i; ++j) {
                    row[j] = detail::fexp(row[j] - mx);
                    sum += row[j];
                }
                const S inv = S(1) / sum;
                S* orow = od + (b * T + i) * W + col;
                for (int64_t j = 0; j <= i; ++j) {
                    const S p = row[j] * inv;
                    if (needs_grad) probs[((u * T) + i) * T + j] = p;
                    const S* vj = vd + (b * T + j) * W + col;
                    for (int64_t c = 0; c < hd; ++c) orow[c] += p * vj[c];
                }
            }
        }
    });

    if (needs_grad) {
        detail::attach_node<S>(
            out, "causal_attention", {q, k, v},
            [qi_ = q.impl_, ki_ = k.impl_, vi_ = v.impl_, probs, B, T, W, hd, n_heads,
             inv_scale](const TensorImpl<S>& o) {
                const S* g = o.grad.data();
                const S* qd2 = qi_->data.data();
                const S* kd2 = ki_->data.data();
                const S* vd2 = vi_->data.data();
                S* dq = qi_->requires_grad ? detail::ensure_grad(*qi_).data() : nullptr;
                S* dk = ki_->requires_grad ? detail::ensure_grad(*ki_).data() : nullptr;
                S* dv = vi_->requires_grad ? detail::ensure_grad(*vi_).data() : nullptr;
                parallel_for(0, B * n_heads, [&](int64_t u0, int64_t u1) {
                    std::vector<S> dp(T);
                    for (int64_t u = u0; u < u1; ++u) {
                        const int64_t b = u / n_heads, h = u % n_heads;
                        const int64_t col = h * hd;
                        for (int64_t i = 0; i < T; ++i) {
                            const S* go = g + (b * T + i) * W + col;
                            const S* prow = probs.get() + ((u * T) + i) * T;
                            // dP then dS (softmax jacobian applied row-wise)
                            S dot = 0;
                            for (int64_t j = 0; j <= i; ++j) {
                                dp[j] = detail::dotk(go, vd2 + (b * T + j) * W + col, hd);
                                dot += dp[j] * prow[j];
                            }
                            for (int64_t j = 0; j <= i; ++j) {
                                const S dS = prow[j] * (dp[j] - dot) * inv_scale;
                                if (dq) {
                                    S* dqi = dq + (b * T + i) * W + col;
                                    const S* kj = kd2 + (b * T + j) * W + col;
                                    for (int64_t c = 0; c < hd; ++c) dqi[c] += dS * kj[c];
                                }
                                if (dk) {
                                    S* dkj = dk + (b * T + j) * W + col;
                                    const S* qi2 = qd2 + (b * T + i) * W + col;
                                    for (int64_t c = 0; c < hd; ++c) dkj[c] += dS * qi2[c];
                                }
                                if (dv) {
                                    S* dvj = dv + (b * T + j) * W + col;
                                    for (int64_t c = 0; c < hd; ++c) dvj[c] += prow[j] * go[c];
                                }
                            }
                        }
                    }
                });
            });
    }
    return out;
}

template <typename S>
Tensor<S> gsa_forward(const GsaParams<S>& shared, const Tensor<S>& site_proj,
                      const Tensor<S>& x_l, const Tensor<S>& x_0, int64_t n_heads, S eps,
                      bool rope, GsaKvCapture<S>* capture) {
    op_require(x_l.shape() == x_0.shape(), "gsa_forward",
               "x_l " + shape_str(x_l.shape()) + " and x_0 " + shape_str(x_0.shape()) +
                   " must match");
    const int64_t d = shared.d_model();
    op_require(x_l.dim(-1) == d, "gsa_forward",
               "input width " + std::to_string(x_l.dim(-1)) + " does not match d_model " +
                   std::to_string(d));
    op_require((2 * d) % n_heads == 0, "gsa_forward", "2*d_model must be divisible by n_heads");

    auto cat = concat_lastdim(x_l, x_0);
    auto normed = rmsnorm(cat, shared.norm_concat, eps);
    auto qkv = matmul(normed, shared.qkv_proj);
    auto q = slice_lastdim(qkv, 0, 2 * d);
    auto k = slice_lastdim(qkv, 2 * d, 2 * d);
    auto v = slice_lastdim(qkv, 4 * d, 2 * d);
    if (rope) {
        q = rope_rotate(q, n_heads, 0);
        k = rope_rotate(k, n_heads, 0);
    }
    if (capture) {
        capture->k = k.data();
        capture->v = v.data();
    }
    auto attn = causal_attention(q, k, v, n_heads);
    auto a = matmul(attn, shared.attn_out_proj);
    auto m = rmsnorm(a, shared.norm_premlp, eps);
    auto mlp = matmul(gelu(matmul(m, shared.mlp_in)), shared.mlp_out);
    return matmul(mlp, site_proj);
}

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

template <typename S>
void rope_row(S* x, int64_t n_heads, int64_t hd, int64_t pos) {
    for (int64_t h = 0; h < n_heads; ++h) {
        for (int64_t j = 0; j < hd / 2; ++j) {
            const double theta = static_cast<double>(pos) *
                                 std::pow(10000.0, -2.0 * static_cast<double>(j) /
                                                       static_cast<double>(hd));
            const S c = static_cast<S>(std::cos(theta));
            const S s = static_cast<S>(std::sin(theta));
            const int64_t i0 = h * hd + 2 * j;
            const S a = x[i0], b = x[i0 + 1];
            x[i0] = a * c - b * s;
            x[i0 + 1] = a * s + b * c;
        }
    }
}

}  // namespace

template <typename S>
std::vector<S> gsa_step(const GsaParams<S>& shared, const Tensor<S>& site_proj,
                        const std::vector<S>& x_l_row, const std::vector<S>& x0_row,
                        int64_t n_heads, S eps, bool rope, KvSlot<S>& cache) {
    const int64_t d = shared.d_model();
    const int64_t w2 = 2 * d;
    op_require(static_cast<int64_t>(x_l_row.size()) == d &&
                   static_cast<int64_t>(x0_row.size()) == d,
               "gsa_step", "row width does not match d_model");
    const int64_t hd = w2 / n_heads;

    std::vector<S> cat(w2);
    std::copy(x_l_row.begin(), x_l_row.end(), cat.begin());
    std::copy(x0_row.begin(), x0_row.end(), cat.begin() + d);
    std::vector<S> normed(w2);
    rmsnorm_row(cat.data(), shared.norm_concat.data().data(), normed.data(), w2, eps);

    std::vector<S> qkv(6 * d, S(0));
    vecmat_accum(normed.data(), shared.qkv_proj.data().data(), qkv.data(), w2, 6 * d);
    S* qrow = qkv.data();
    S* krow = qkv.data() + w2;
    const S* vrow = qkv.data() + 2 * w2;

    const int64_t pos = cache.positions;
    if (rope) {
        rope_row(qrow, n_heads, hd, pos);
        rope_row(krow, n_heads, hd, pos);
    }
    cache.k.insert(cache.k.end(), krow, krow + w2);
    cache.v.insert(cache.v.end(), vrow, vrow + w2);
    cache.positions += 1;

    const S inv_scale = S(1) / std::sqrt(static_cast<S>(hd));
    std::vector<S> attn(w2, S(0));
    std::vector<S> score(cache.positions);
    for (int64_t h = 0; h < n_heads; ++h) {
        const int64_t col = h * hd;
        S mx = -std::numeric_limits<S>::infinity();
        for (int64_t j = 0; j < cache.positions; ++j) {
            score[j] = detail::dotk(qrow + col, cache.k.data() + j * w2 + col, hd) * inv_scale;
            mx = std::max(mx, score[j]);
        }
        S sum = 0;
        for (int64_t j = 0; j < cache.positions; ++j) {
            score[j] = detail::fexp(score[j] - mx);
            sum += score[j];
        }
        const S inv = S(1) / sum;
        for (int64_t j = 0; j < cache.positions; ++j) {
            const S p = score[j] * inv;
            const S* vj = cache.v.data() + j * w2 + col;
            for (int64_t c = 0; c < hd; ++c) attn[col + c] += p * vj[c];
        }
    }

    std::vector<S> a(d, S(0));
    vecmat_accum(attn.data(), shared.attn_out_proj.data().data(), a.data(), w2, d);
    std::vector<S> m(d);
    rmsnorm_row(a.data(), shared.norm_premlp.data().data(), m.data(), d, eps);

    const int64_t mh = shared.mlp_hidden();
    std::vector<S> hbuf(mh, S(0));
    vecmat_accum(m.data(), shared.mlp_in.data().data(), hbuf.data(), d, mh);
    constexpr S inv_sqrt2 = S(0.70710678118654752440);
    for (int64_t j = 0; j < mh; ++j)
        hbuf[j] = S(0.5) * hbuf[j] * (S(1) + std::erf(hbuf[j] * inv_sqrt2));
    std::vector<S> mlp(d, S(0));
    vecmat_accum(hbuf.data(), shared.mlp_out.data().data(), mlp.data(), mh, d);

    std::vector<S> y(d, S(0));
    vecmat_accum(mlp.data(), site_proj.data().data(), y.data(), d, d);
    return y;
}

template struct GsaParams<float>;
template struct GsaParams<double>;
template Tensor<float> causal_attention<float>(const Tensor<float>&, const Tensor<float>&,
                                               const Tensor<float>&, int64_t);
template Tensor<double> causal_attention<double>(const Tensor<double>&, const Tensor<double>&,
                                                 const Tensor<double>&, int64_t);
template Tensor<float> gsa_forward<float>(const GsaParams<float>&, const Tensor<float>&,
                                          const Tensor<float>&, const Tensor<float>&, int64_t,
                                          float, bool, GsaKvCapture<float>*);
template Tensor<double> gsa_forward<double>(const GsaParams<double>&, const Tensor<double>&,
                                            const Tensor<double>&, const Tensor<double>&, int64_t,
                                            double, bool, GsaKvCapture<double>*);
template std::vector<float> gsa_step<float>(const GsaParams<float>&, const Tensor<float>&,
                                            const std::vector<float>&, const std::vector<float>&,
                                            int64_t, float, bool, KvSlot<float>&);
template std::vector<double> gsa_step<double>(const GsaParams<double>&, const Tensor<double>&,
                                              const std::vector<double>&,
                                              const std::vector<double>&, int64_t, double, bool,
                                              KvSlot<double>&);

}  // namespace zamba

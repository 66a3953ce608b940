#include "zamba/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "zamba/parallel.hpp"

namespace zamba {

namespace {
thread_local bool g_grad_enabled = true;
thread_local bool g_check_finite = false;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool v) { g_grad_enabled = v; }
bool check_finite_enabled() { return g_check_finite; }
void set_check_finite(bool v) { g_check_finite = v; }

namespace detail {

template <typename S>
bool autograd_needed(std::initializer_list<const Tensor<S>*> inputs) {
    if (!g_grad_enabled) return false;
    for (const auto* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

template <typename S>
void attach_node(Tensor<S>& out, const char* op, std::vector<Tensor<S>> parents,
                 std::function<void(const TensorImpl<S>&)> backward) {
    auto node = std::make_shared<Node<S>>();
    node->op = op;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.impl_);
    node->backward = std::move(backward);
    out.impl_->node = std::move(node);
    out.impl_->requires_grad = true;
}

template <typename S>
std::vector<S>& ensure_grad(TensorImpl<S>& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), S(0));
    return t.grad;
}

template <typename S>
void check_inputs(const char* op, std::initializer_list<const Tensor<S>*> inputs) {
    if (!g_check_finite) return;
    for (const auto* t : inputs) {
        if (!t->defined()) continue;
        for (S v : t->data()) {
            if (!std::isfinite(static_cast<double>(v)))
                throw numeric_error(std::string(op) + ": non-finite input");
        }
    }
}

template <typename S>
void gemm(const S* a, const S* w, S* c, int64_t M, int64_t K, int64_t N) {
    parallel_for(0, M, [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            const S* ai = a + i * K;
            S* ci = c + i * N;
            for (int64_t p = 0; p < K; ++p) {
                const S apv = ai[p];
                const S* wp = w + p * N;
                for (int64_t j = 0; j < N; ++j) ci[j] += apv * wp[j];
            }
        }
    });
}

template <typename S>
void gemm_at_b(const S* a, const S* g, S* dw, int64_t M, int64_t K, int64_t N) {
    parallel_for(0, K, [&](int64_t k0, int64_t k1) {
        for (int64_t i = 0; i < M; ++i) {
            const S* ai = a + i * K;
            const S* gi = g + i * N;
            for (int64_t p = k0; p < k1; ++p) {
                const S apv = ai[p];
                S* dwp = dw + p * N;
                for (int64_t j = 0; j < N; ++j) dwp[j] += apv * gi[j];
            }
        }
    });
}

template <typename S>
void gemm_a_bt(const S* g, const S* w, S* da, int64_t M, int64_t K, int64_t N) {
    parallel_for(0, M, [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            const S* gi = g + i * N;
            S* dai = da + i * K;
            for (int64_t p = 0; p < K; ++p) dai[p] += dotk(gi, w + p * N, N);
        }
    });
}

#define ZAMBA_DETAIL_INST(S)                                                                      \
    template bool autograd_needed<S>(std::initializer_list<const Tensor<S>*>);                    \
    template void attach_node<S>(Tensor<S>&, const char*, std::vector<Tensor<S>>,                 \
                                 std::function<void(const TensorImpl<S>&)>);                      \
    template std::vector<S>& ensure_grad<S>(TensorImpl<S>&);                                      \
    template void check_inputs<S>(const char*, std::initializer_list<const Tensor<S>*>);          \
    template void gemm<S>(const S*, const S*, S*, int64_t, int64_t, int64_t);                     \
    template void gemm_at_b<S>(const S*, const S*, S*, int64_t, int64_t, int64_t);                \
    template void gemm_a_bt<S>(const S*, const S*, S*, int64_t, int64_t, int64_t);

ZAMBA_DETAIL_INST(float)
ZAMBA_DETAIL_INST(double)
#undef ZAMBA_DETAIL_INST

}  // namespace detail

using detail::attach_node;
using detail::autograd_needed;
using detail::check_inputs;
using detail::ensure_grad;

// ---------------------------------------------------------------- matmul

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& w) {
    check_inputs<S>("matmul", {&a, &w});
    op_require(a.ndim() >= 1 && w.ndim() == 2, "matmul",
               "expects [...,k] x [k,n], got " + shape_str(a.shape()) + " x " + shape_str(w.shape()));
    const int64_t K = a.dim(-1);
    op_require(w.dim(0) == K, "matmul",
               "shape mismatch " + shape_str(a.shape()) + " x " + shape_str(w.shape()));
    const int64_t N = w.dim(1);
    const int64_t M = a.numel() / K;
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(N);
    auto out = Tensor<S>::zeros(std::move(out_shape));
    detail::gemm(a.data().data(), w.data().data(), out.data().data(), M, K, N);
    if (autograd_needed<S>({&a, &w})) {
        attach_node<S>(out, "matmul", {a, w}, [ai = a.impl_, wi = w.impl_, M, K, N](const TensorImpl<S>& o) {
            if (ai->requires_grad)
                detail::gemm_a_bt(o.grad.data(), wi->data.data(), ensure_grad(*ai).data(), M, K, N);
            if (wi->requires_grad)
                detail::gemm_at_b(ai->data.data(), o.grad.data(), ensure_grad(*wi).data(), M, K, N);
        });
    }
    return out;
}

template <typename S>
Tensor<S> linear_t(const Tensor<S>& a, const Tensor<S>& w) {
    check_inputs<S>("linear_t", {&a, &w});
    op_require(a.ndim() >= 1 && w.ndim() == 2, "linear_t",
               "expects [...,k] x [n,k], got " + shape_str(a.shape()) + " x " + shape_str(w.shape()));
    const int64_t K = a.dim(-1);
    op_require(w.dim(1) == K, "linear_t",
               "shape mismatch " + shape_str(a.shape()) + " x " + shape_str(w.shape()));
    const int64_t N = w.dim(0);
    const int64_t M = a.numel() / K;
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(N);
    auto out = Tensor<S>::zeros(std::move(out_shape));
    // out = a . w^T : rows of w are the columns of the effective matrix
    detail::gemm_a_bt(a.data().data(), w.data().data(), out.data().data(), M, N, K);
    if (autograd_needed<S>({&a, &w})) {
        attach_node<S>(out, "linear_t", {a, w}, [ai = a.impl_, wi = w.impl_, M, K, N](const TensorImpl<S>& o) {
            if (ai->requires_grad)
                detail::gemm(o.grad.data(), wi->data.data(), ensure_grad(*ai).data(), M, N, K);
            if (wi->requires_grad)
                detail::gemm_at_b(o.grad.data(), ai->data.data(), ensure_grad(*wi).data(), M, N, K);
        });
    }
    return out;
}

// ------------------------------------------------------------- add / mul

namespace {

// Shared shape handling for elementwise binary ops: identical shapes, or b a
// 1-d vector matching the last extent of a (leading dims broadcast).
template <typename S>
bool binary_broadcasts(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() == b.shape()) return false;
    op_require(b.ndim() == 1 && b.dim(0) == a.dim(-1), op,
               "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    return true;
}

}  // namespace

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    check_inputs<S>("add", {&a, &b});
    const bool bcast = binary_broadcasts("add", a, b);
    auto out = Tensor<S>::zeros(a.shape());
    const int64_t n = a.numel(), w = b.numel();
    const S* ad = a.data().data();
    const S* bd = b.data().data();
    S* od = out.data().data();
    if (bcast) {
        for (int64_t i = 0; i < n; ++i) od[i] = ad[i] + bd[i % w];
    } else {
        for (int64_t i = 0; i < n; ++i) od[i] = ad[i] + bd[i];
    }
    if (autograd_needed<S>({&a, &b})) {
        attach_node<S>(out, "add", {a, b}, [ai = a.impl_, bi = b.impl_, bcast, n, w](const TensorImpl<S>& o) {
            const S* g = o.grad.data();
            if (ai->requires_grad) {
                S* da = ensure_grad(*ai).data();
                for (int64_t i = 0; i < n; ++i) da[i] += g[i];
            }
            if (bi->requires_grad) {
                S* db = ensure_grad(*bi).data();
                if (bcast) {
                    for (int64_t i = 0; i < n; ++i) db[i % w] += g[i];
                } else {
                    for (int64_t i = 0; i < n; ++i) db[i] += g[i];
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    check_inputs<S>("mul", {&a, &b});
    const bool bcast = binary_broadcasts("mul", a, b);
    auto out = Tensor<S>::zeros(a.shape());
    const int64_t n = a.numel(), w = b.numel();
    const S* ad = a.data().data();
    const S* bd = b.data().data();
    S* od = out.data().data();
    if (bcast) {
        for (int64_t i = 0; i < n; ++i) od[i] = ad[i] * bd[i % w];
    } else {
        for (int64_t i = 0; i < n; ++i) od[i] = ad[i] * bd[i];
    }
    if (autograd_needed<S>({&a, &b})) {
        attach_node<S>(out, "mul", {a, b}, [ai = a.impl_, bi = b.impl_, bcast, n, w](const TensorImpl<S>& o) {
            const S* g = o.grad.data();
            const S* ad2 = ai->data.data();
            const S* bd2 = bi->data.data();
            if (ai->requires_grad) {
                S* da = ensure_grad(*ai).data();
                if (bcast) {
                    for (int64_t i = 0; i < n; ++i) da[i] += g[i] * bd2[i % w];
                } else {
                    for (int64_t i = 0; i < n; ++i) da[i] += g[i] * bd2[i];
                }
            }
            if (bi->requires_grad) {
                S* db = ensure_grad(*bi).data();
                if (bcast) {
                    for (int64_t i = 0; i < n; ++i) db[i % w] += g[i] * ad2[i];
                } else {
                    for (int64_t i = 0; i < n; ++i) db[i] += g[i] * ad2[i];
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    check_inputs<S>("scale", {&a});
    auto out = Tensor<S>::zeros(a.shape());
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
    if (autograd_needed<S>({&a})) {
        attach_node<S>(out, "scale", {a}, [ai = a.impl_, c, n](const TensorImpl<S>& o) {
            if (!ai->requires_grad) return;
            S* da = ensure_grad(*ai).data();
            const S* g = o.grad.data();
            for (int64_t i = 0; i < n; ++i) da[i] += g[i] * c;
        });
    }
    return out;
}

// ------------------------------------------------------------ unary ops

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
    check_inputs<S>("exp", {&x});
    auto out = Tensor<S>::zeros(x.shape());
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = detail::fexp(x.data()[i]);
    if (autograd_needed<S>({&x})) {
        attach_node<S>(out, "exp", {x}, [xi = x.impl_, n](const TensorImpl<S>& o) {
            if (!xi->requires_grad) return;
            S* dx = ensure_grad(*xi).data();
            for (int64_t i = 0; i < n; ++i) dx[i] += o.grad[i] * o.data[i];
        });
    }
    return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    check_inputs<S>("sigmoid", {&x});
    auto out = Tensor<S>::zeros(x.shape());
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = detail::fsigmoid(x.data()[i]);
    if (autograd_needed<S>({&x})) {
        attach_node<S>(out, "sigmoid", {x}, [xi = x.impl_, n](const TensorImpl<S>& o) {
            if (!xi->requires_grad) return;
            S* dx = ensure_grad(*xi).data();
            for (int64_t i = 0; i < n; ++i) {
                const S s = o.data[i];
                dx[i] += o.grad[i] * s * (S(1) - s);
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
    check_inputs<S>("silu", {&x});
    auto out = Tensor<S>::zeros(x.shape());
    const int64_t n = x.numel();
    const S* xd = x.data().data();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = xd[i] * detail::fsigmoid(xd[i]);
    if (autograd_needed<S>({&x})) {
        attach_node<S>(out, "silu", {x}, [xi = x.impl_, n](const TensorImpl<S>& o) {
            if (!xi->requires_grad) return;
            S* dx = ensure_grad(*xi).data();
            const S* xv = xi->data.data();
            for (int64_t i = 0; i < n; ++i) {
                const S s = detail::fsigmoid(xv[i]);
                dx[i] += o.grad[i] * s * (S(1) + xv[i] * (S(1) - s));
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    check_inputs<S>("gelu", {&x});
    auto out = Tensor<S>::zeros(x.shape());
    const int64_t n = x.numel();
    const S* xd = x.data().data();
    constexpr S inv_sqrt2 = S(0.70710678118654752440);
    for (int64_t i = 0; i < n; ++i)
        out.data()[i] = S(0.5) * xd[i] * (S(1) + std::erf(xd[i] * inv_sqrt2));
    if (autograd_needed<S>({&x})) {
        attach_node<S>(out, "gelu", {x}, [xi = x.impl_, n](const TensorImpl<S>& o) {
            if (!xi->requires_grad) return;
            S* dx = ensure_grad(*xi).data();
            const S* xv = xi->data.data();
            constexpr S inv_sqrt_2pi = S(0.39894228040143267794);
            for (int64_t i = 0; i < n; ++i) {
                const S cdf = S(0.5) * (S(1) + std::erf(xv[i] * inv_sqrt2));
                const S pdf = inv_sqrt_2pi * detail::fexp(S(-0.5) * xv[i] * xv[i]);
                dx[i] += o.grad[i] * (cdf + xv[i] * pdf);
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> softplus(const Tensor<S>& x) {
    check_inputs<S>("softplus", {&x});
    auto out = Tensor<S>::zeros(x.shape());
    const int64_t n = x.numel();
    const S* xd = x.data().data();
    for (int64_t i = 0; i < n; ++i) {
        const S v = xd[i];
        out.data()[i] = v > S(20) ? v : std::log1p(detail::fexp(v));
    }
    if (autograd_needed<S>({&x})) {
        attach_node<S>(out, "softplus", {x}, [xi = x.impl_, n](const TensorImpl<S>& o) {
            if (!xi->requires_grad) return;
            S* dx = ensure_grad(*xi).data();
            const S* xv = xi->data.data();
            for (int64_t i = 0; i < n; ++i) dx[i] += o.grad[i] * detail::fsigmoid(xv[i]);
        });
    }
    return out;
}

// ------------------------------------------------------ softmax / rmsnorm

template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
    check_inputs<S>("softmax", {&x});
    const int64_t n = x.dim(-1);
    op_require(n > 0, "softmax", "zero-length last dimension " + shape_str(x.shape()));
    const int64_t rows = x.numel() / n;
    auto out = Tensor<S>::zeros(x.shape());
    const S* xd = x.data().data();
    S* od = out.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = xd + r * n;
        S* orow = od + r * n;
        S mx = xr[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        S sum = 0;
        for (int64_t j = 0; j < n; ++j) {
            orow[j] = detail::fexp(xr[j] - mx);
            sum += orow[j];
        }
        const S inv = S(1) / sum;
        for (int64_t j = 0; j < n; ++j) orow[j] *= inv;
    }
    if (autograd_needed<S>({&x})) {
        attach_node<S>(out, "softmax", {x}, [xi = x.impl_, rows, n](const TensorImpl<S>& o) {
            if (!xi->requires_grad) return;
            S* dx = ensure_grad(*xi).data();
            for (int64_t r = 0; r < rows; ++r) {
                const S* p = o.data.data() + r * n;
                const S* g = o.grad.data() + r * n;
                S dot = 0;
                for (int64_t j = 0; j < n; ++j) dot += g[j] * p[j];
                S* dxr = dx + r * n;
                for (int64_t j = 0; j < n; ++j) dxr[j] += p[j] * (g[j] - dot);
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> rmsnorm(const Tensor<S>& x, const Tensor<S>& weight, S eps) {
    check_inputs<S>("rmsnorm", {&x, &weight});
    const int64_t n = x.ndim() > 0 ? x.dim(-1) : 0;
    op_require(n > 0, "rmsnorm", "zero-length last dimension " + shape_str(x.shape()));
    op_require(weight.ndim() == 1 && weight.dim(0) == n, "rmsnorm",
               "weight " + shape_str(weight.shape()) + " does not match last extent of " +
                   shape_str(x.shape()));
    op_require(eps >= S(0), "rmsnorm", "eps must be non-negative");
    const int64_t rows = x.numel() / n;
    auto out = Tensor<S>::zeros(x.shape());
    auto rinv = std::make_shared<std::vector<S>>(rows);
    const S* xd = x.data().data();
    const S* wd = weight.data().data();
    S* od = out.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = xd + r * n;
        const S ms = detail::dotk(xr, xr, n) / static_cast<S>(n);
        const S rv = S(1) / std::sqrt(ms + eps);
        (*rinv)[r] = rv;
        S* orow = od + r * n;
        for (int64_t j = 0; j < n; ++j) orow[j] = xr[j] * wd[j] * rv;
    }
    if (autograd_needed<S>({&x, &weight})) {
        attach_node<S>(out, "rmsnorm", {x, weight},
                       [xi = x.impl_, wi = weight.impl_, rinv, rows, n](const TensorImpl<S>& o) {
            const S* xd2 = xi->data.data();
            const S* wd2 = wi->data.data();
            for (int64_t r = 0; r < rows; ++r) {
                const S* g = o.grad.data() + r * n;
                const S* xr = xd2 + r * n;
                const S rv = (*rinv)[r];
                if (xi->requires_grad) {
                    S* dx = ensure_grad(*xi).data() + r * n;
                    S dot = 0;
                    for (int64_t j = 0; j < n; ++j) dot += g[j] * wd2[j] * xr[j];
                    const S k = rv * rv * rv * dot / static_cast<S>(n);
                    for (int64_t j = 0; j < n; ++j) dx[j] += rv * wd2[j] * g[j] - k * xr[j];
                }
                if (wi->requires_grad) {
                    S* dw = ensure_grad(*wi).data();
                    for (int64_t j = 0; j < n; ++j) dw[j] += g[j] * xr[j] * rv;
                }
            }
        });
    }
    return out;
}

// ------------------------------------------------------- concat / slice

template <typename S>
Tensor<S> concat_lastdim(const Tensor<S>& a, const Tensor<S>& b) {
    check_inputs<S>("concat", {&a, &b});
    op_require(a.ndim() == b.ndim() && a.ndim() >= 1, "concat",
               "rank mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    for (int i = 0; i + 1 < a.ndim(); ++i)
        op_require(a.dim(i) == b.dim(i), "concat",
                   "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int64_t na = a.dim(-1), nb = b.dim(-1);
    Shape out_shape = a.shape();
    out_shape.back() = na + nb;
    auto out = Tensor<S>::zeros(out_shape);
    const int64_t rows = a.numel() / na;
    for (int64_t r = 0; r < rows; ++r) {
        std::copy_n(a.data().data() + r * na, na, out.data().data() + r * (na + nb));
        std::copy_n(b.data().data() + r * nb, nb, out.data().data() + r * (na + nb) + na);
    }
    if (autograd_needed<S>({&a, &b})) {
        attach_node<S>(out, "concat", {a, b},
                       [ai = a.impl_, bi = b.impl_, rows, na, nb](const TensorImpl<S>& o) {
            const S* g = o.grad.data();
            for (int64_t r = 0; r < rows; ++r) {
                if (ai->requires_grad) {
                    S* da = ensure_grad(*ai).data() + r * na;
                    const S* gr = g + r * (na + nb);
                    for (int64_t j = 0; j < na; ++j) da[j] += gr[j];
                }
                if (bi->requires_grad) {
                    S* db = ensure_grad(*bi).data() + r * nb;
                    const S* gr = g + r * (na + nb) + na;
                    for (int64_t j = 0; j < nb; ++j) db[j] += gr[j];
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> slice_lastdim(const Tensor<S>& x, int64_t start, int64_t len) {
    check_inputs<S>("slice", {&x});
    const int64_t n = x.dim(-1);
    op_require(start >= 0 && len >= 1 && start + len <= n, "slice",
               "range [" + std::to_string(start) + "," + std::to_string(start + len) +
                   ") out of bounds for " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape.back() = len;
    auto out = Tensor<S>::zeros(out_shape);
    const int64_t rows = x.numel() / n;
    for (int64_t r = 0; r < rows; ++r)
        std::copy_n(x.data().data() + r * n + start, len, out.data().data() + r * len);
    if (autograd_needed<S>({&x})) {
        attach_node<S>(out, "slice", {x}, [xi = x.impl_, rows, n, start, len](const TensorImpl<S>& o) {
            if (!xi->requires_grad) return;
            S* dx = ensure_grad(*xi).data();
            for (int64_t r = 0; r < rows; ++r) {
                const S* g = o.grad.data() + r * len;
                S* dxr = dx + r * n + start;
                for (int64_t j = 0; j < len; ++j) dxr[j] += g[j];
            }
        });
    }
    return out;
}

// ------------------------------------------------------------ conv1d

// Depthwise causal convolution over [..., T, C] with kernel [C, k]: output at
// time t sees inputs t-k+1..t, missing history reads as zero. kernel[c, k-1]
// multiplies the current input.
template <typename S>
Tensor<S> conv1d_causal(const Tensor<S>& x, const Tensor<S>& kernel) {
    check_inputs<S>("conv1d", {&x, &kernel});
    op_require(x.ndim() >= 2, "conv1d", "input must be [...,T,C], got " + shape_str(x.shape()));
    op_require(kernel.ndim() == 2, "conv1d", "kernel must be [C,k], got " + shape_str(kernel.shape()));
    const int64_t C = x.dim(-1), T = x.dim(-2), K = kernel.dim(1);
    op_require(kernel.dim(0) == C, "conv1d",
               "channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(kernel.shape()));
    op_require(K >= 1, "conv1d", "kernel width must be >= 1");
    const int64_t Bn = x.numel() / (T * C);
    // kernel transposed to [k, C] so the channel loop is contiguous
    auto kt = std::make_shared<std::vector<S>>(K * C);
    for (int64_t c = 0; c < C; ++c)
        for (int64_t j = 0; j < K; ++j) (*kt)[j * C + c] = kernel.data()[c * K + j];
    auto out = Tensor<S>::zeros(x.shape());
    const S* xd = x.data().data();
    S* od = out.data().data();
    for (int64_t b = 0; b < Bn; ++b) {
        for (int64_t t = 0; t < T; ++t) {
            S* orow = od + (b * T + t) * C;
            for (int64_t j = 0; j < K; ++j) {
                const int64_t src = t - (K - 1) + j;
                if (src < 0) continue;
                const S* xr = xd + (b * T + src) * C;
                const S* kj = kt->data() + j * C;
                for (int64_t c = 0; c < C; ++c) orow[c] += kj[c] * xr[c];
            }
        }
    }
    if (autograd_needed<S>({&x, &kernel})) {
        attach_node<S>(out, "conv1d", {x, kernel},
                       [xi = x.impl_, ki = kernel.impl_, kt, Bn, T, C, K](const TensorImpl<S>& o) {
            const S* g = o.grad.data();
            const S* xd2 = xi->data.data();
            if (xi->requires_grad) {
                S* dx = ensure_grad(*xi).data();
                for (int64_t b = 0; b < Bn; ++b) {
                    for (int64_t t = 0; t < T; ++t) {
                        const S* gr = g + (b * T + t) * C;
                        for (int64_t j = 0; j < K; ++j) {
                            const int64_t src = t - (K - 1) + j;
                            if (src < 0) continue;
                            S* dxr = dx + (b * T + src) * C;
                            const S* kj = kt->data() + j * C;
                            for (int64_t c = 0; c < C; ++c) dxr[c] += kj[c] * gr[c];
                        }
                    }
                }
            }
            if (ki->requires_grad) {
                std::vector<S> dkt(K * C, S(0));
                for (int64_t b = 0; b < Bn; ++b) {
                    for (int64_t t = 0; t < T; ++t) {
                        const S* gr = g + (b * T + t) * C;
                        for (int64_t j = 0; j < K; ++j) {
                            const int64_t src = t - (K - 1) + j;
                            if (src < 0) continue;
                            const S* xr = xd2 + (b * T + src) * C;
                            S* dkj = dkt.data() + j * C;
                            for (int64_t c = 0; c < C; ++c) dkj[c] += gr[c] * xr[c];
                        }
                    }
                }
                S* dk = ensure_grad(*ki).data();
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t j = 0; j < K; ++j) dk[c * K + j] += dkt[j * C + c];
            }
        });
    }
    return out;
}

// --------------------------------------------------------- embedding

template <typename S>
Tensor<S> embedding(const Tensor<S>& table, const TokenIds& ids, Shape id_shape) {
    check_inputs<S>("embedding", {&table});
    op_require(table.ndim() == 2, "embedding", "table must be [V,d], got " + shape_str(table.shape()));
    const int64_t V = table.dim(0), d = table.dim(1);
    op_require(numel_of(id_shape) == static_cast<int64_t>(ids.size()), "embedding",
               "id count does not match shape " + shape_str(id_shape));
    for (int32_t id : ids)
        op_require(id >= 0 && id < V, "embedding",
                   "token " + std::to_string(id) + " out of range [0," + std::to_string(V) + ")");
    Shape out_shape = std::move(id_shape);
    out_shape.push_back(d);
    auto out = Tensor<S>::zeros(std::move(out_shape));
    for (size_t r = 0; r < ids.size(); ++r)
        std::copy_n(table.data().data() + static_cast<int64_t>(ids[r]) * d, d,
                    out.data().data() + static_cast<int64_t>(r) * d);
    if (autograd_needed<S>({&table})) {
        auto ids_copy = std::make_shared<TokenIds>(ids);
        attach_node<S>(out, "embedding", {table}, [ti = table.impl_, ids_copy, d](const TensorImpl<S>& o) {
            if (!ti->requires_grad) return;
            S* dt = ensure_grad(*ti).data();
            for (size_t r = 0; r < ids_copy->size(); ++r) {
                const S* g = o.grad.data() + static_cast<int64_t>(r) * d;
                S* row = dt + static_cast<int64_t>((*ids_copy)[r]) * d;
                for (int64_t j = 0; j < d; ++j) row[j] += g[j];
            }
        });
    }
    return out;
}

// ----------------------------------------------------- cross entropy

template <typename S>
Tensor<S> cross_entropy_mean(const Tensor<S>& logits, const TokenIds& targets) {
    check_inputs<S>("cross_entropy", {&logits});
    const int64_t V = logits.dim(-1);
    const int64_t N = logits.numel() / V;
    op_require(static_cast<int64_t>(targets.size()) == N, "cross_entropy",
               "target count " + std::to_string(targets.size()) + " does not match logits " +
                   shape_str(logits.shape()));
    for (int32_t t : targets)
        op_require(t >= 0 && t < V, "cross_entropy", "target " + std::to_string(t) + " out of range");
    auto probs = detail::uninit_array<S>(N * V);
    const S* xd = logits.data().data();
    double total = 0;
    for (int64_t r = 0; r < N; ++r) {
        const S* row = xd + r * V;
        S mx = row[0];
        for (int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
        S sum = 0;
        S* pr = probs.get() + r * V;
        for (int64_t j = 0; j < V; ++j) {
            pr[j] = detail::fexp(row[j] - mx);
            sum += pr[j];
        }
        const S inv = S(1) / sum;
        for (int64_t j = 0; j < V; ++j) pr[j] *= inv;
        total += std::log(static_cast<double>(sum)) + static_cast<double>(mx) -
                 static_cast<double>(row[targets[static_cast<size_t>(r)]]);
    }
    auto out = Tensor<S>::scalar(static_cast<S>(total / static_cast<double>(N)));
    if (autograd_needed<S>({&logits})) {
        auto tgt = std::make_shared<TokenIds>(targets);
        attach_node<S>(out, "cross_entropy", {logits}, [li = logits.impl_, probs, tgt, N, V](const TensorImpl<S>& o) {
            if (!li->requires_grad) return;
            const S g = o.grad[0] / static_cast<S>(N);
            S* dl = ensure_grad(*li).data();
            for (int64_t r = 0; r < N; ++r) {
                const S* pr = probs.get() + r * V;
                S* dr = dl + r * V;
                for (int64_t j = 0; j < V; ++j) dr[j] += g * pr[j];
                dr[(*tgt)[static_cast<size_t>(r)]] -= g;
            }
        });
    }
    return out;
}

// ----------------------------------------------------------- reductions

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
    check_inputs<S>("sum", {&x});
    S total = 0;
    for (S v : x.data()) total += v;
    auto out = Tensor<S>::scalar(total);
    if (autograd_needed<S>({&x})) {
        attach_node<S>(out, "sum", {x}, [xi = x.impl_](const TensorImpl<S>& o) {
            if (!xi->requires_grad) return;
            S* dx = ensure_grad(*xi).data();
            const S g = o.grad[0];
            for (size_t i = 0; i < xi->data.size(); ++i) dx[i] += g;
        });
    }
    return out;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
    op_require(numel_of(shape) == x.numel(), "reshape",
               "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    auto out = Tensor<S>::from_data(std::move(shape), x.data());
    if (autograd_needed<S>({&x})) {
        attach_node<S>(out, "reshape", {x}, [xi = x.impl_](const TensorImpl<S>& o) {
            if (!xi->requires_grad) return;
            S* dx = ensure_grad(*xi).data();
            for (size_t i = 0; i < xi->data.size(); ++i) dx[i] += o.grad[i];
        });
    }
    return out;
}

// -------------------------------------------------------------- rope

// Rotary position embedding over [..., T, W]; adjacent value pairs inside each
// head are rotated by pos * theta_j with theta_j = 10000^(-2j/head_dim).
template <typename S>
Tensor<S> rope_rotate(const Tensor<S>& x, int64_t n_heads, int64_t pos0) {
    check_inputs<S>("rope", {&x});
    op_require(x.ndim() >= 2, "rope", "input must be [...,T,W], got " + shape_str(x.shape()));
    const int64_t W = x.dim(-1), T = x.dim(-2);
    op_require(n_heads >= 1 && W % n_heads == 0, "rope", "width not divisible by heads");
    const int64_t hd = W / n_heads;
    op_require(hd % 2 == 0, "rope", "head dim must be even, got " + std::to_string(hd));
    const int64_t Bn = x.numel() / (T * W);
    auto out = Tensor<S>::zeros(x.shape());
    auto rotate = [pos0, n_heads, hd](const S* src, S* dst, int64_t t, S sign) {
        const double pos = static_cast<double>(pos0 + t);
        for (int64_t h = 0; h < n_heads; ++h) {
            for (int64_t j = 0; j < hd / 2; ++j) {
                const double theta = pos * std::pow(10000.0, -2.0 * static_cast<double>(j) /
                                                                 static_cast<double>(hd));
                const S c = static_cast<S>(std::cos(theta));
                const S s = static_cast<S>(std::sin(theta)) * sign;
                const int64_t i0 = h * hd + 2 * j;
                const S a = src[i0], b = src[i0 + 1];
                dst[i0] += a * c - b * s;
                dst[i0 + 1] += a * s + b * c;
            }
        }
    };
    for (int64_t b = 0; b < Bn; ++b)
        for (int64_t t = 0; t < T; ++t)
            rotate(x.data().data() + (b * T + t) * W, out.data().data() + (b * T + t) * W, t, S(1));
    if (autograd_needed<S>({&x})) {
        attach_node<S>(out, "rope", {x}, [xi = x.impl_, rotate, Bn, T, W](const TensorImpl<S>& o) {
            if (!xi->requires_grad) return;
            S* dx = ensure_grad(*xi).data();
            for (int64_t b = 0; b < Bn; ++b)
                for (int64_t t = 0; t < T; ++t)
                    rotate(o.grad.data() + (b * T + t) * W, dx + (b * T + t) * W, t, S(-1));
        });
    }
    return out;
}

// ------------------------------------------------------------ backward

template <typename S>
void backward(const Tensor<S>& root) {
    op_require(root.defined(), "backward", "undefined tensor");
    op_require(root.numel() == 1, "backward",
               "root must be a scalar, shape " + shape_str(root.shape()));
    op_require(root.impl_->node != nullptr, "backward", "root has no provenance");

    std::vector<std::shared_ptr<TensorImpl<S>>> order;
    std::unordered_set<const TensorImpl<S>*> visited;
    struct Frame {
        std::shared_ptr<TensorImpl<S>> impl;
        size_t next;
    };
    std::vector<Frame> stack;
    visited.insert(root.impl_.get());
    stack.push_back({root.impl_, 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        auto& parents = f.impl->node->parents;
        if (f.next < parents.size()) {
            auto& p = parents[f.next++];
            if (p->node && !visited.count(p.get())) {
                visited.insert(p.get());
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.impl);
            stack.pop_back();
        }
    }

    root.impl_->grad.assign(1, S(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl<S>& impl = **it;
        if (impl.grad.empty()) impl.grad.assign(impl.data.size(), S(0));
        impl.node->backward(impl);
        impl.node.reset();
    }
}

// ----------------------------------------------------- instantiations

#define ZAMBA_INSTANTIATE_OPS(S)                                                       \
    template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);                  \
    template Tensor<S> linear_t<S>(const Tensor<S>&, const Tensor<S>&);                \
    template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);                     \
    template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);                     \
    template Tensor<S> scale<S>(const Tensor<S>&, S);                                  \
    template Tensor<S> exp<S>(const Tensor<S>&);                                       \
    template Tensor<S> sigmoid<S>(const Tensor<S>&);                                   \
    template Tensor<S> silu<S>(const Tensor<S>&);                                      \
    template Tensor<S> gelu<S>(const Tensor<S>&);                                      \
    template Tensor<S> softplus<S>(const Tensor<S>&);                                  \
    template Tensor<S> softmax_lastdim<S>(const Tensor<S>&);                           \
    template Tensor<S> rmsnorm<S>(const Tensor<S>&, const Tensor<S>&, S);              \
    template Tensor<S> concat_lastdim<S>(const Tensor<S>&, const Tensor<S>&);          \
    template Tensor<S> slice_lastdim<S>(const Tensor<S>&, int64_t, int64_t);           \
    template Tensor<S> conv1d_causal<S>(const Tensor<S>&, const Tensor<S>&);           \
    template Tensor<S> embedding<S>(const Tensor<S>&, const TokenIds&, Shape);         \
    template Tensor<S> cross_entropy_mean<S>(const Tensor<S>&, const TokenIds&);       \
    template Tensor<S> sum_all<S>(const Tensor<S>&);                                   \
    template Tensor<S> reshape<S>(const Tensor<S>&, Shape);                            \
    template Tensor<S> rope_rotate<S>(const Tensor<S>&, int64_t, int64_t);             \
    template void backward<S>(const Tensor<S>&);

ZAMBA_INSTANTIATE_OPS(float)
ZAMBA_INSTANTIATE_OPS(double)
#undef ZAMBA_INSTANTIATE_OPS

}  // namespace zamba

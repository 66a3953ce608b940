#pragma once

// Dense n-d tensors with reverse-mode differentiation. Every value node
// carries an optional provenance record (op tag + parents + backward
// closure); backward() walks the graph once in reverse topological order
// and sums gradient contributions across all paths, which is what makes
// parameters used at several graph sites accumulate the per-site grads.
//
// Graphs are single-use: backward() releases each node after applying it.

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "zamba/common.hpp"
#include "zamba/rng.hpp"

namespace zamba {

template <typename S>
struct TensorImpl;

template <typename S>
struct Node {
    const char* op;
    std::vector<std::shared_ptr<TensorImpl<S>>> parents;
    // Receives the impl that owns this node; reads its grad (and data when
    // the derivative is cheapest in terms of the output).
    std::function<void(const TensorImpl<S>&)> backward;
};

template <typename S>
struct TensorImpl {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node<S>> node;
};

template <typename S>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from_data(std::move(shape), {}, requires_grad);
    }
    static Tensor full(Shape shape, S value, bool requires_grad = false) {
        std::vector<S> d(numel_of(shape), value);
        return from_data(std::move(shape), std::move(d), requires_grad);
    }
    static Tensor from_data(Shape shape, std::vector<S> data, bool requires_grad = false) {
        auto impl = std::make_shared<TensorImpl<S>>();
        const int64_t n = numel_of(shape);
        if (data.empty()) data.assign(n, S(0));
        op_require(static_cast<int64_t>(data.size()) == n, "tensor",
                   "data length " + std::to_string(data.size()) + " does not match shape " +
                       shape_str(shape));
        impl->shape = std::move(shape);
        impl->data = std::move(data);
        impl->requires_grad = requires_grad;
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }
    static Tensor scalar(S value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }
    int64_t dim(int i) const {
        const int nd = ndim();
        return impl_->shape[static_cast<size_t>(i < 0 ? nd + i : i)];
    }

    std::vector<S>& data() { return impl_->data; }
    const std::vector<S>& data() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::vector<S>& grad() {
        if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), S(0));
        return impl_->grad;
    }
    const std::vector<S>& grad() const {
        op_require(!impl_->grad.empty(), "grad", "tensor has no gradient");
        return impl_->grad;
    }
    void zero_grad() { impl_->grad.clear(); }

    bool has_graph() const { return impl_->node != nullptr; }
    const char* op_tag() const { return impl_->node ? impl_->node->op : "leaf"; }

    S item() const {
        op_require(numel() == 1, "item", "tensor is not a scalar, shape " + shape_str(shape()));
        return impl_->data[0];
    }
    S at(std::initializer_list<int64_t> idx) const {
        int64_t flat = 0;
        int i = 0;
        for (int64_t v : idx) flat = flat * impl_->shape[i++] + v;
        return impl_->data[static_cast<size_t>(flat)];
    }

    Tensor clone() const {
        return from_data(impl_->shape, impl_->data, impl_->requires_grad);
    }

    std::shared_ptr<TensorImpl<S>> impl_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using TokenIds = std::vector<int32_t>;

// ---- grad / checked-mode switches (thread local) ----
bool grad_enabled();
void set_grad_enabled(bool);
struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }
    bool prev_;
};

bool check_finite_enabled();
void set_check_finite(bool);

namespace detail {

template <typename S>
bool autograd_needed(std::initializer_list<const Tensor<S>*> inputs);

template <typename S>
void attach_node(Tensor<S>& out, const char* op, std::vector<Tensor<S>> parents,
                 std::function<void(const TensorImpl<S>&)> backward);

template <typename S>
std::vector<S>& ensure_grad(TensorImpl<S>& t);

template <typename S>
void check_inputs(const char* op, std::initializer_list<const Tensor<S>*> inputs);

// c (M x N) += a (M x K) . w (K x N), all row-major.
template <typename S>
void gemm(const S* a, const S* w, S* c, int64_t M, int64_t K, int64_t N);
// dw (K x N) += a^T (K x M) . g (M x N)
template <typename S>
void gemm_at_b(const S* a, const S* g, S* dw, int64_t M, int64_t K, int64_t N);
// da (M x K) += g (M x N) . w^T (N x K), w stored (K x N)
template <typename S>
void gemm_a_bt(const S* g, const S* w, S* da, int64_t M, int64_t K, int64_t N);

}  // namespace detail

// ---- primitives ----
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& w);
template <typename S>
Tensor<S> linear_t(const Tensor<S>& a, const Tensor<S>& w);  // a . w^T, w is [n, k]
template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c);
template <typename S>
Tensor<S> exp(const Tensor<S>& x);
template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x);
template <typename S>
Tensor<S> silu(const Tensor<S>& x);
template <typename S>
Tensor<S> gelu(const Tensor<S>& x);
template <typename S>
Tensor<S> softplus(const Tensor<S>& x);
template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& x);
template <typename S>
Tensor<S> rmsnorm(const Tensor<S>& x, const Tensor<S>& weight, S eps);
template <typename S>
Tensor<S> concat_lastdim(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> slice_lastdim(const Tensor<S>& x, int64_t start, int64_t len);
template <typename S>
Tensor<S> conv1d_causal(const Tensor<S>& x, const Tensor<S>& kernel);
template <typename S>
Tensor<S> embedding(const Tensor<S>& table, const TokenIds& ids, Shape id_shape);
template <typename S>
Tensor<S> cross_entropy_mean(const Tensor<S>& logits, const TokenIds& targets);
template <typename S>
Tensor<S> sum_all(const Tensor<S>& x);
template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape);
template <typename S>
Tensor<S> rope_rotate(const Tensor<S>& x, int64_t n_heads, int64_t pos0);

// Reverse-mode pass from a scalar root with provenance. Single use: node
// closures are dropped as soon as they have been applied.
template <typename S>
void backward(const Tensor<S>& root);

// ---- init helpers ----
template <typename S>
void fill_normal(Tensor<S>& t, Rng& rng, double mean, double stddev) {
    for (auto& v : t.data()) v = static_cast<S>(rng.normal(mean, stddev));
}
template <typename S>
void fill_uniform(Tensor<S>& t, Rng& rng, double lo, double hi) {
    for (auto& v : t.data()) v = static_cast<S>(rng.uniform(lo, hi));
}

}  // namespace zamba

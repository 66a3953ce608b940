#pragma once

// Test-only utilities: finite-difference gradient checking, a direct O(T^2)
// attention reference, and random tensor construction. These stay
// independent of the library's backward implementations on purpose.

#include <cmath>
#include <functional>
#include <vector>

#include "zamba/rng.hpp"
#include "zamba/tensor.hpp"

namespace testutil {

template <typename S>
zamba::Tensor<S> random_tensor(zamba::Shape shape, zamba::Rng& rng, double scale = 1.0,
                               bool requires_grad = true) {
    auto t = zamba::Tensor<S>::zeros(shape, requires_grad);
    for (auto& v : t.data()) v = static_cast<S>(rng.normal(0.0, scale));
    return t;
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checks = 0;
};

// Central finite differences against the analytic gradients of build().
// build() must reconstruct the graph from the leaves' current data. Checks
// every element unless sample_per_leaf > 0. An entry passes when
// |analytic - fd| <= atol + rtol * max(|analytic|, |fd|); the absolute floor
// covers the fd roundoff noise (~|f| * eps / h) on near-zero gradients.
template <typename S>
GradCheckResult check_gradients(const std::function<zamba::Tensor<S>()>& build,
                                std::vector<zamba::Tensor<S>*> leaves, double h, double rtol,
                                double atol = 1e-8, int sample_per_leaf = -1,
                                uint64_t sample_seed = 17) {
    for (auto* leaf : leaves) leaf->zero_grad();
    auto loss = build();
    zamba::backward(loss);

    GradCheckResult res;
    zamba::Rng pick(sample_seed);
    for (auto* leaf : leaves) {
        const auto& grad = leaf->grad();
        const int64_t n = leaf->numel();
        std::vector<int64_t> indices;
        if (sample_per_leaf > 0 && sample_per_leaf < n) {
            for (int s = 0; s < sample_per_leaf; ++s)
                indices.push_back(static_cast<int64_t>(pick.next_below(n)));
        } else {
            indices.resize(n);
            for (int64_t i = 0; i < n; ++i) indices[i] = i;
        }
        for (int64_t idx : indices) {
            const S saved = leaf->data()[idx];
            leaf->data()[idx] = static_cast<S>(static_cast<double>(saved) + h);
            const double fp = static_cast<double>(build().item());
            leaf->data()[idx] = static_cast<S>(static_cast<double>(saved) - h);
            const double fm = static_cast<double>(build().item());
            leaf->data()[idx] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = static_cast<double>(grad[idx]);
            const double bound = atol + rtol * std::max(std::abs(an), std::abs(fd));
            const double err = std::abs(an - fd) / (std::max(std::abs(an), std::abs(fd)) + atol / rtol);
            res.max_rel_err = std::max(res.max_rel_err, err);
            ++res.checks;
            REQUIRE_MESSAGE(std::abs(an - fd) <= bound, "grad mismatch at index "
                                                            << idx << ": analytic " << an
                                                            << " vs fd " << fd);
        }
    }
    return res;
}

// Direct causal attention evaluation, one (query, key) pair at a time.
template <typename S>
std::vector<S> naive_causal_attention(const std::vector<S>& q, const std::vector<S>& k,
                                      const std::vector<S>& v, int64_t B, int64_t T, int64_t W,
                                      int64_t n_heads) {
    const int64_t hd = W / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<S> out(B * T * W, S(0));
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t h = 0; h < n_heads; ++h) {
            const int64_t col = h * hd;
            for (int64_t i = 0; i < T; ++i) {
                std::vector<double> w(i + 1);
                double mx = -1e300;
                for (int64_t j = 0; j <= i; ++j) {
                    double dot = 0;
                    for (int64_t c = 0; c < hd; ++c)
                        dot += static_cast<double>(q[(b * T + i) * W + col + c]) *
                               static_cast<double>(k[(b * T + j) * W + col + c]);
                    w[j] = dot * scale;
                    mx = std::max(mx, w[j]);
                }
                double sum = 0;
                for (int64_t j = 0; j <= i; ++j) {
                    w[j] = std::exp(w[j] - mx);
                    sum += w[j];
                }
                for (int64_t j = 0; j <= i; ++j) {
                    const double p = w[j] / sum;
                    for (int64_t c = 0; c < hd; ++c)
                        out[(b * T + i) * W + col + c] +=
                            static_cast<S>(p * static_cast<double>(v[(b * T + j) * W + col + c]));
                }
            }
        }
    }
    return out;
}

template <typename S>
double max_abs_diff(const std::vector<S>& a, const std::vector<S>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

template <typename S>
double max_rel_diff(const std::vector<S>& a, const std::vector<S>& b, double floor = 1e-8) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double x = static_cast<double>(a[i]), y = static_cast<double>(b[i]);
        m = std::max(m, std::abs(x - y) / (std::max(std::abs(x), std::abs(y)) + floor));
    }
    return m;
}

// Largest elementwise deviation normalized by the reference scale; the
// sane relative metric for comparing two float evaluations of the same
// quantity across values that cross zero.
template <typename S>
double scale_rel_diff(const std::vector<S>& ref, const std::vector<S>& got) {
    double scale = 0;
    for (S v : ref) scale = std::max(scale, std::abs(static_cast<double>(v)));
    return max_abs_diff(ref, got) / std::max(scale, 1e-300);
}

}  // namespace testutil

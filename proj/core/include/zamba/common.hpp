#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zamba {

using Shape = std::vector<int64_t>;

// Raised when training encounters a non-finite loss or checked mode sees a
// non-finite value; the CLI maps it to its own exit code.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline void op_require(bool cond, const char* op, const std::string& msg) {
    if (!cond) throw std::invalid_argument(std::string(op) + ": " + msg);
}

namespace detail {

// Uninitialized scratch storage for op-internal saved buffers; every element
// is written before it is read, and skipping the value-init avoids paging in
// megabytes of zeros on the training hot path.
template <typename S>
std::shared_ptr<S[]> uninit_array(size_t n) {
    return std::shared_ptr<S[]>(new S[n]);
}

// Cephes-style expf; ~1e-7 relative error. Entirely straight-line float
// arithmetic (min/max spelled with fabs, round-to-nearest via the 1.5*2^23
// shift) so gcc vectorizes surrounding loops. Saturates to ~0 below -87 and
// to ~2.4e38 above 88.
inline float fexp_impl(float x) {
    float t = x * 1.44269504088896341f;
    t = 0.5f * (t + 127.0f - std::fabs(t - 127.0f));   // min(t, 127)
    t = 0.5f * (t - 126.0f + std::fabs(t + 126.0f));   // max(t, -126)
    const float z = (t + 12582912.0f) - 12582912.0f;   // nearest integer
    float r = x - z * 0.693359375f;
    r -= z * -2.12194440e-4f;
    r = 0.5f * (r + 0.3466f - std::fabs(r - 0.3466f));  // keep the poly domain
    r = 0.5f * (r - 0.3466f + std::fabs(r + 0.3466f));  // when z was clamped
    float y = 1.9875691500e-4f;
    y = y * r + 1.3981999507e-3f;
    y = y * r + 8.3334519073e-3f;
    y = y * r + 4.1665795894e-2f;
    y = y * r + 1.6666665459e-1f;
    y = y * r + 5.0000001201e-1f;
    y = y * r * r + r + 1.0f;
    const int32_t n = (static_cast<int32_t>(z) + 127) << 23;
    return y * std::bit_cast<float>(n);
}

template <typename S>
inline S fexp(S x) {
    if constexpr (std::is_same_v<S, float>) {
        return fexp_impl(x);
    } else {
        return std::exp(x);
    }
}

template <typename S>
inline S fsigmoid(S x) {
    return S(1) / (S(1) + fexp(-x));
}

// Dot product with a fixed number of partial accumulators so the summation
// order is identical for every build and thread count.
template <typename S>
inline S dotk(const S* a, const S* b, int64_t n) {
    constexpr int64_t lanes = 64 / sizeof(S);
    S acc[lanes] = {};
    int64_t j = 0;
    for (; j + lanes <= n; j += lanes) {
        for (int64_t u = 0; u < lanes; ++u) acc[u] += a[j + u] * b[j + u];
    }
    S tail = 0;
    for (; j < n; ++j) tail += a[j] * b[j];
    S total = 0;
    for (int64_t u = 0; u < lanes; ++u) total += acc[u];
    return total + tail;
}

}  // namespace detail
}  // namespace zamba

#include <doctest.h>

#include "helpers.hpp"
#include "zamba/scan.hpp"

using namespace zamba;
using testutil::random_tensor;

namespace {

template <typename S>
struct ScanCase {
    Tensor<S> delta, A, B, C, x, h0;
};

template <typename S>
ScanCase<S> random_case(Rng& rng, int64_t T, int64_t di, int64_t ds, bool with_h0) {
    ScanCase<S> c;
    c.delta = Tensor<S>::zeros({T, di});
    for (auto& v : c.delta.data()) v = static_cast<S>(std::exp(rng.uniform(-4.0, 0.0)));
    c.A = Tensor<S>::zeros({di, ds});
    for (auto& v : c.A.data()) v = static_cast<S>(-std::exp(rng.uniform(-1.0, 1.5)));
    c.B = random_tensor<S>({T, ds}, rng, 0.7, false);
    c.C = random_tensor<S>({T, ds}, rng, 0.7, false);
    c.x = random_tensor<S>({T, di}, rng, 0.8, false);
    if (with_h0) c.h0 = random_tensor<S>({di, ds}, rng, 0.5, false);
    return c;
}

}  // namespace

TEST_SUITE("scan") {

TEST_CASE("one step with identity dynamics") {
    // A=0 forces exp(A*delta)=1; delta=1, B=1, C=1, x=5 -> h=5, y=5
    auto delta = TensorF::from_data({1, 1}, {1});
    auto A = TensorF::from_data({1, 1}, {0});
    auto B = TensorF::from_data({1, 1}, {1});
    auto C = TensorF::from_data({1, 1}, {1});
    auto x = TensorF::from_data({1, 1}, {5});
    auto r = selective_scan_sequential(delta, A, B, C, x);
    CHECK(r.y.data()[0] == doctest::Approx(5.0f));
    CHECK(r.h_final.data()[0] == doctest::Approx(5.0f));
}

TEST_CASE("geometric decay by hand") {
    // exp(A*delta) = 0.5 with A=-1, delta=ln2; B=0 so h halves every step:
    // h0=8 -> 4 -> 2 -> 1 after 3 steps; y_t = C*h_t
    const float ln2 = std::log(2.0f);
    auto delta = TensorF::from_data({3, 1}, {ln2, ln2, ln2});
    auto A = TensorF::from_data({1, 1}, {-1});
    auto B = TensorF::zeros({3, 1});
    auto C = TensorF::from_data({3, 1}, {2, 2, 2});
    auto x = TensorF::zeros({3, 1});
    auto h0 = TensorF::from_data({1, 1}, {8});
    auto r = selective_scan_sequential(delta, A, B, C, x, h0);
    CHECK(r.h_final.data()[0] == doctest::Approx(1.0f).epsilon(1e-5));
    CHECK(r.y.data()[0] == doctest::Approx(8.0f).epsilon(1e-5));
    CHECK(r.y.data()[1] == doctest::Approx(4.0f).epsilon(1e-5));
    CHECK(r.y.data()[2] == doctest::Approx(2.0f).epsilon(1e-5));
}

TEST_CASE("parallel scan: T=1 equals sequential by construction") {
    Rng rng(5);
    auto c = random_case<float>(rng, 1, 3, 4, true);
    auto rs = selective_scan_sequential(c.delta, c.A, c.B, c.C, c.x, c.h0);
    auto rp = selective_scan_parallel(c.delta, c.A, c.B, c.C, c.x, c.h0);
    CHECK(rs.y.data() == rp.y.data());
    CHECK(rs.h_final.data() == rp.h_final.data());
}

TEST_CASE("prefix-sum degenerate case: a=1, b=1 gives h_T = T") {
    // A=0 -> a_t = 1; delta=1, B=1, x=1 (euler) -> b_t = 1; h0 = 0
    const int64_t T = 8;
    auto delta = TensorF::full({T, 1}, 1.0f);
    auto A = TensorF::zeros({1, 1});
    auto B = TensorF::full({T, 1}, 1.0f);
    auto C = TensorF::full({T, 1}, 1.0f);
    auto x = TensorF::full({T, 1}, 1.0f);
    auto r = selective_scan_parallel(delta, A, B, C, x);
    CHECK(r.h_final.data()[0] == doctest::Approx(8.0f));
    for (int64_t t = 0; t < T; ++t) CHECK(r.y.data()[t] == doctest::Approx(float(t + 1)));
}

TEST_CASE("sequential vs parallel over 100 random fp32 instances") {
    Rng rng(11);
    double worst = 0;
    for (int it = 0; it < 100; ++it) {
        const int64_t T = 1 + static_cast<int64_t>(rng.next_below(256));
        const int64_t di = 1 + static_cast<int64_t>(rng.next_below(8));
        auto c = random_case<float>(rng, T, di, 16, it % 2 == 0);
        auto rs = selective_scan_sequential(c.delta, c.A, c.B, c.C, c.x, c.h0);
        auto rp = selective_scan_parallel(c.delta, c.A, c.B, c.C, c.x, c.h0);
        worst = std::max(worst, testutil::scale_rel_diff(rs.y.data(), rp.y.data()));
        worst = std::max(worst, testutil::scale_rel_diff(rs.h_final.data(), rp.h_final.data()));
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("sequential vs parallel in fp64 reaches 1e-10") {
    Rng rng(12);
    double worst = 0;
    for (int it = 0; it < 30; ++it) {
        const int64_t T = 1 + static_cast<int64_t>(rng.next_below(256));
        auto c = random_case<double>(rng, T, 4, 16, true);
        auto rs = selective_scan_sequential(c.delta, c.A, c.B, c.C, c.x, c.h0);
        auto rp = selective_scan_parallel(c.delta, c.A, c.B, c.C, c.x, c.h0);
        worst = std::max(worst, testutil::scale_rel_diff(rs.y.data(), rp.y.data()));
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("input discretization switch: none drops the delta factor") {
    Rng rng(13);
    auto c = random_case<float>(rng, 6, 2, 3, false);
    auto euler = selective_scan_sequential(c.delta, c.A, c.B, c.C, c.x, {}, InputDisc::euler);
    auto none = selective_scan_sequential(c.delta, c.A, c.B, c.C, c.x, {}, InputDisc::none);
    CHECK(testutil::max_abs_diff(euler.y.data(), none.y.data()) > 1e-4);
    // with delta == 1 the two agree exactly on the input term
    auto ones = TensorF::full({6, 2}, 1.0f);
    auto e1 = selective_scan_sequential(ones, c.A, c.B, c.C, c.x, {}, InputDisc::euler);
    auto n1 = selective_scan_sequential(ones, c.A, c.B, c.C, c.x, {}, InputDisc::none);
    CHECK(e1.y.data() == n1.y.data());
}

TEST_CASE("non-positive delta is rejected") {
    auto delta = TensorF::from_data({2, 1}, {0.5f, 0.0f});
    auto A = TensorF::zeros({1, 1});
    auto B = TensorF::zeros({2, 1});
    auto C = TensorF::zeros({2, 1});
    auto x = TensorF::zeros({2, 1});
    CHECK_THROWS_AS(selective_scan_sequential(delta, A, B, C, x), std::invalid_argument);
}

TEST_CASE("causality: perturbing x at t leaves earlier outputs bit-identical") {
    Rng rng(14);
    auto c = random_case<float>(rng, 32, 4, 8, false);
    for (ScanMode mode : {ScanMode::sequential, ScanMode::parallel}) {
        auto base = selective_scan(c.delta, c.A, c.B, c.C, c.x, {}, mode);
        auto x2 = c.x.clone();
        const int64_t t = 17;
        for (int64_t i = 0; i < 4; ++i) x2.data()[t * 4 + i] += 3.0f;
        auto pert = selective_scan(c.delta, c.A, c.B, c.C, x2, {}, mode);
        for (int64_t p = 0; p < t * 4; ++p) CHECK(base.y.data()[p] == pert.y.data()[p]);
        bool changed = false;
        for (int64_t p = t * 4; p < 32 * 4; ++p)
            if (base.y.data()[p] != pert.y.data()[p]) changed = true;
        CHECK(changed);
    }
}

TEST_CASE("stability: bounded inputs give bounded state over T=4096") {
    Rng rng(15);
    auto c = random_case<float>(rng, 4096, 2, 16, false);
    auto r = selective_scan_sequential(c.delta, c.A, c.B, c.C, c.x);
    double max_y = 0;
    for (float v : r.y.data()) {
        REQUIRE(std::isfinite(v));
        max_y = std::max(max_y, std::abs(static_cast<double>(v)));
    }
    CHECK(max_y < 1e4);
}

TEST_CASE("scan gradients match finite differences (both modes)") {
    Rng rng(16);
    for (ScanMode mode : {ScanMode::sequential, ScanMode::parallel}) {
        auto delta = Tensor<double>::zeros({5, 2}, true);
        for (auto& v : delta.data()) v = std::exp(rng.uniform(-2.0, 0.0));
        auto A = Tensor<double>::zeros({2, 3}, true);
        for (auto& v : A.data()) v = -std::exp(rng.uniform(-1.0, 1.0));
        auto B = random_tensor<double>({5, 3}, rng, 0.7);
        auto C = random_tensor<double>({5, 3}, rng, 0.7);
        auto x = random_tensor<double>({5, 2}, rng, 0.8);
        auto h0 = random_tensor<double>({2, 3}, rng, 0.5);
        auto probe = random_tensor<double>({5, 2}, rng, 1.0, false);
        testutil::check_gradients<double>(
            [&] {
                auto r = selective_scan(delta, A, B, C, x, h0, mode);
                return sum_all(mul(r.y, probe));
            },
            {&delta, &A, &B, &C, &x, &h0}, 1e-6, 1e-6);
    }
}

}  // TEST_SUITE

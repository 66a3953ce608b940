#include <doctest.h>

#include "helpers.hpp"
#include "zamba/mamba.hpp"

using namespace zamba;
using testutil::random_tensor;

namespace {

template <typename S>
MambaParams<S> random_block(Rng& rng, int64_t d, int64_t di, int64_t ds, int64_t k, int64_t dtr) {
    auto p = MambaParams<S>::create(d, di, ds, k, dtr);
    auto init = [&](Tensor<S>& t, double scale) {
        for (auto& v : t.data()) v = static_cast<S>(rng.normal(0.0, scale));
    };
    init(p.in_proj, 0.2);
    init(p.conv_kernel, 0.3);
    init(p.x_proj, 0.2);
    init(p.dt_proj_w, 0.2);
    for (auto& v : p.dt_proj_b.data())
        v = static_cast<S>(std::log(std::expm1(std::exp(rng.uniform(-6.0, -2.0)))));
    for (int64_t i = 0; i < di; ++i)
        for (int64_t n = 0; n < ds; ++n)
            p.A_log.data()[i * ds + n] = static_cast<S>(std::log(double(n + 1)));
    std::fill(p.D_skip.data().begin(), p.D_skip.data().end(), S(1));
    init(p.out_proj, 0.2);
    return p;
}

}  // namespace

TEST_SUITE("mamba") {

TEST_CASE("zero parameters give zero output and keep the state at zero") {
    auto p = MambaParams<float>::create(4, 8, 3, 4, 2);
    auto x = TensorF::full({5, 4}, 0.7f);
    auto y = mamba_block_forward(p, x);
    for (float v : y.data()) CHECK(v == 0.0f);

    auto st = SsmState<float>::zero(p);
    auto out = mamba_step(p, st, std::vector<float>(4, 0.7f));
    for (float v : out) CHECK(v == 0.0f);
    for (float v : st.h) CHECK(v == 0.0f);
}

TEST_CASE("T=1 batch forward equals one step from a zero state") {
    Rng rng(21);
    auto p = random_block<float>(rng, 6, 12, 4, 4, 2);
    auto x = random_tensor<float>({1, 6}, rng, 1.0, false);
    auto y = mamba_block_forward(p, x);
    auto st = SsmState<float>::zero(p);
    auto ystep = mamba_step(p, st, x.data());
    CHECK(testutil::max_abs_diff(y.data(), ystep) <= 1e-6);
}

TEST_CASE("step-by-step equals batch forward over T=32") {
    Rng rng(22);
    for (InputDisc disc : {InputDisc::euler, InputDisc::none}) {
        BlockOptions opts;
        opts.input_disc = disc;
        auto p = random_block<float>(rng, 8, 16, 4, 4, 2);
        auto x = random_tensor<float>({32, 8}, rng, 1.0, false);
        MambaStateCapture<float> cap;
        auto y = mamba_block_forward(p, x, opts, &cap);
        auto st = SsmState<float>::zero(p);
        std::vector<float> row(8);
        double worst = 0;
        for (int64_t t = 0; t < 32; ++t) {
            std::copy_n(x.data().data() + t * 8, 8, row.begin());
            auto out = mamba_step(p, st, row, opts);
            for (int64_t j = 0; j < 8; ++j)
                worst = std::max(worst,
                                 std::abs(double(out[j]) - double(y.data()[t * 8 + j])));
        }
        CHECK(worst <= 1e-5);
        // final recurrent state matches the captured batch state
        CHECK(testutil::max_abs_diff(st.h, cap.h_final) <= 1e-5);
        CHECK(testutil::max_abs_diff(st.conv_tail, cap.conv_tail) <= 1e-6);
    }
}

TEST_CASE("state after T steps equals the scan's final state") {
    // run the scan path and the step path on identical hand-fed sequences
    Rng rng(23);
    const int64_t T = 12, di = 3, ds = 5;
    auto delta = Tensor<float>::zeros({T, di});
    for (auto& v : delta.data()) v = static_cast<float>(std::exp(rng.uniform(-3.0, 0.0)));
    auto A = Tensor<float>::zeros({di, ds});
    for (auto& v : A.data()) v = static_cast<float>(-std::exp(rng.uniform(-1.0, 1.0)));
    auto B = random_tensor<float>({T, ds}, rng, 0.7, false);
    auto C = random_tensor<float>({T, ds}, rng, 0.7, false);
    auto x = random_tensor<float>({T, di}, rng, 0.8, false);
    auto r = selective_scan_sequential(delta, A, B, C, x);

    std::vector<float> h(di * ds, 0.0f);
    for (int64_t t = 0; t < T; ++t) {
        for (int64_t i = 0; i < di; ++i) {
            for (int64_t n = 0; n < ds; ++n) {
                const float a = std::exp(A.data()[i * ds + n] * delta.data()[t * di + i]);
                h[i * ds + n] = a * h[i * ds + n] +
                                delta.data()[t * di + i] * B.data()[t * ds + n] * x.data()[t * di + i];
            }
        }
    }
    CHECK(testutil::max_rel_diff(h, r.h_final.data(), 1e-5) <= 1e-5);
}

TEST_CASE("block gradient matches finite differences (fp64, tiny dims)") {
    Rng rng(24);
    auto p = random_block<double>(rng, 3, 6, 2, 3, 2);
    auto x = random_tensor<double>({4, 3}, rng, 0.8);
    auto probe = random_tensor<double>({4, 3}, rng, 1.0, false);
    std::vector<Tensor<double>*> leaves = {&p.in_proj, &p.conv_kernel, &p.x_proj, &p.dt_proj_w,
                                           &p.dt_proj_b, &p.A_log, &p.D_skip, &p.out_proj, &x};
    auto res = testutil::check_gradients<double>(
        [&] { return sum_all(mul(mamba_block_forward(p, x), probe)); }, leaves, 1e-5, 1e-4, 1e-7);
    CHECK(res.checks > 0);
}

TEST_CASE("parallel scan mode inside the block agrees with sequential") {
    Rng rng(25);
    auto p = random_block<float>(rng, 8, 16, 4, 4, 2);
    auto x = random_tensor<float>({24, 8}, rng, 1.0, false);
    BlockOptions seq, par;
    par.scan_mode = ScanMode::parallel;
    auto ys = mamba_block_forward(p, x, seq);
    auto yp = mamba_block_forward(p, x, par);
    CHECK(testutil::max_rel_diff(ys.data(), yp.data(), 1e-4) <= 1e-5);
}

TEST_CASE("d-skip toggle changes the output path") {
    Rng rng(26);
    auto p = random_block<float>(rng, 4, 8, 3, 4, 2);
    auto x = random_tensor<float>({6, 4}, rng, 1.0, false);
    BlockOptions with, without;
    without.use_d_skip = false;
    auto yw = mamba_block_forward(p, x, with);
    auto yo = mamba_block_forward(p, x, without);
    CHECK(testutil::max_abs_diff(yw.data(), yo.data()) > 1e-6);
}

TEST_CASE("dimension mismatches are rejected") {
    auto p = MambaParams<float>::create(4, 8, 3, 4, 2);
    CHECK_THROWS_AS(mamba_block_forward(p, TensorF::zeros({5, 3})), std::invalid_argument);
    auto st = SsmState<float>::zero(p);
    CHECK_THROWS_AS(mamba_step(p, st, std::vector<float>(3, 0.f)), std::invalid_argument);
    auto p2 = MambaParams<float>::create(4, 8, 2, 4, 2);  // different d_state
    CHECK_THROWS_AS(mamba_step(p2, st, std::vector<float>(4, 0.f)), std::invalid_argument);
}

}  // TEST_SUITE

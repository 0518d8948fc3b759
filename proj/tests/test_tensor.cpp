#include <cstring>
#include <numeric>

#include "doctest.h"
#include "drape/adam.hpp"
#include "drape/grad_check.hpp"
#include "drape/mesh_ops.hpp"
#include "drape/msssim.hpp"
#include "drape/rng.hpp"
#include "drape/tensor.hpp"

using namespace drape;

namespace {

std::vector<double> rand_vec(Pcg32& rng, int n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Magnitudes bounded away from zero, random sign. Keeps finite differences
// clear of the kinks in abs, relu and clamp.
std::vector<double> rand_vec_offzero(Pcg32& rng, int n, double lo = 0.25, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    return v;
}

// Reduces any tensor to a scalar through a fixed random weighting so the
// gradient check exercises full output sensitivity.
TapeF64::Id weighted_sum(TapeF64& t, TapeF64::Id y, Pcg32 rng) {
    std::vector<double> w(t.shape(y).count());
    for (double& x : w) x = rng.uniform(-1.0, 1.0);
    return t.sum(t.mul(y, t.constant(t.shape(y), w)));
}

// Direct convolution reference with explicit zero padding, structured
// differently from the tape kernel.
std::vector<double> conv_reference(const std::vector<double>& x, int n, int ci, int h, int w,
                                   const std::vector<double>& k, int co, int kh, int kw,
                                   int stride, int pad, int& oh, int& ow) {
    int ph = h + 2 * pad, pw = w + 2 * pad;
    std::vector<double> padded(static_cast<size_t>(n) * ci * ph * pw, 0.0);
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < ci; ++c)
            for (int y = 0; y < h; ++y)
                for (int z = 0; z < w; ++z)
                    padded[((static_cast<size_t>(b) * ci + c) * ph + y + pad) * pw + z + pad] =
                        x[((static_cast<size_t>(b) * ci + c) * h + y) * w + z];
    oh = (ph - kh) / stride + 1;
    ow = (pw - kw) / stride + 1;
    std::vector<double> out(static_cast<size_t>(n) * co * oh * ow, 0.0);
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < co; ++o)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double acc = 0.0;
                    for (int c = 0; c < ci; ++c)
                        for (int u = 0; u < kh; ++u)
                            for (int v = 0; v < kw; ++v)
                                acc += padded[((static_cast<size_t>(b) * ci + c) * ph + i * stride +
                                               u) * pw + j * stride + v] *
                                       k[((static_cast<size_t>(o) * ci + c) * kh + u) * kw + v];
                    out[((static_cast<size_t>(b) * co + o) * oh + i) * ow + j] = acc;
                }
    return out;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("elementwise chain gradients match finite differences") {
    Pcg32 rng(11);
    Shape s{2, 3, 4, 4};
    auto a = rand_vec(rng, s.count());
    auto b = rand_vec_offzero(rng, s.count(), 0.5, 1.5);
    auto res = check_gradients(
        {{s, a}, {s, b}},
        [&](TapeF64& t, const std::vector<int>& ids) {
            auto y = t.div(t.mul(t.add(ids[0], ids[1]), t.sub(ids[0], ids[1])), ids[1]);
            return weighted_sum(t, y, Pcg32(3));
        });
    CHECK(res.checked == 2 * s.count());
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("unary op gradients match finite differences") {
    Pcg32 rng(12);
    Shape s{1, 2, 3, 5};
    auto smooth = rand_vec(rng, s.count());
    auto res = check_gradients({{s, smooth}}, [&](TapeF64& t, const std::vector<int>& ids) {
        auto y = t.tanh_op(ids[0]);
        y = t.add(y, t.gelu(ids[0]));
        y = t.add(y, t.exp_op(t.scale(ids[0], 0.5)));
        y = t.add(y, t.scale(t.add_const(ids[0], 0.25), -1.5));
        return weighted_sum(t, y, Pcg32(4));
    });
    CHECK(res.max_rel_err < 1e-4);

    auto kinky = rand_vec_offzero(rng, s.count());
    res = check_gradients({{s, kinky}}, [&](TapeF64& t, const std::vector<int>& ids) {
        auto y = t.abs_op(ids[0]);
        y = t.add(y, t.relu(ids[0]));
        y = t.add(y, t.clamp_min(ids[0], -0.1));
        y = t.add(y, t.clamp(ids[0], -2.0, 0.1));
        return weighted_sum(t, y, Pcg32(5));
    });
    CHECK(res.max_rel_err < 1e-4);

    auto positive = rand_vec(rng, s.count(), 0.5, 1.5);
    res = check_gradients({{s, positive}}, [&](TapeF64& t, const std::vector<int>& ids) {
        return weighted_sum(t, t.pow_const(ids[0], 1.7), Pcg32(6));
    });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("gelu matches the exact error-function form") {
    Tape t;
    std::vector<float> xs = {-3.0f, -1.0f, -0.1f, 0.0f, 0.1f, 1.0f, 3.0f};
    auto y = t.gelu(t.leaf(Shape{static_cast<int>(xs.size())}, xs, false));
    for (size_t i = 0; i < xs.size(); ++i) {
        double x = xs[i];
        double want = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
        CHECK(std::abs(t.val(y)[i] - want) < 1e-6);
    }
}

TEST_CASE("shaping ops round trip and differentiate") {
    Pcg32 rng(13);
    Shape s{2, 5, 2, 3};
    auto a = rand_vec(rng, s.count());

    Tape t;
    std::vector<float> af(a.begin(), a.end());
    auto x = t.leaf(s, af, false);
    auto lo = t.slice_channels(x, 0, 2);
    auto hi = t.slice_channels(x, 2, 5);
    auto back = t.concat_channels(lo, hi);
    auto flat = t.reshape(x, Shape{60});
    CHECK(t.val(back) == t.val(x));
    CHECK(t.val(flat) == t.val(x));

    auto res = check_gradients({{s, a}}, [&](TapeF64& t2, const std::vector<int>& ids) {
        auto l = t2.slice_channels(ids[0], 1, 3);
        auto h = t2.slice_channels(ids[0], 3, 5);
        auto y = t2.concat_channels(t2.mul(l, l), h);
        return weighted_sum(t2, t2.reshape(y, Shape{4, 12, 1, 1}), Pcg32(7));
    });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("channel broadcasts and masking differentiate") {
    Pcg32 rng(14);
    Shape s{2, 3, 4, 2};
    auto a = rand_vec(rng, s.count());
    auto bias = rand_vec(rng, 3);
    auto gain = rand_vec_offzero(rng, 3, 0.5, 1.5);
    std::vector<double> mask(4 * 2);
    for (double& m : mask) m = rng.uniform() < 0.5 ? 0.0 : 1.0;
    mask[0] = 1.0;

    auto res = check_gradients(
        {{s, a}, {Shape{3}, bias}, {Shape{3}, gain}},
        [&](TapeF64& t, const std::vector<int>& ids) {
            auto y = t.mul_channel(t.add_channel_bias(ids[0], ids[1]), ids[2]);
            return weighted_sum(t, t.mul_mask(y, mask), Pcg32(8));
        });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("linear layer matches a direct product and differentiates") {
    Pcg32 rng(15);
    auto x = rand_vec(rng, 4 * 5);
    auto w = rand_vec(rng, 5 * 3);
    auto b = rand_vec(rng, 3);

    TapeF64 t;
    auto y = t.linear(t.leaf(Shape{4, 5}, x, false), t.leaf(Shape{5, 3}, w, false),
                      t.leaf(Shape{3}, b, false));
    for (int r = 0; r < 4; ++r)
        for (int j = 0; j < 3; ++j) {
            double want = b[j];
            for (int i = 0; i < 5; ++i) want += x[r * 5 + i] * w[i * 3 + j];
            CHECK(std::abs(t.val(y)[r * 3 + j] - want) < 1e-12);
        }

    auto res = check_gradients(
        {{Shape{4, 5}, x}, {Shape{5, 3}, w}, {Shape{3}, b}},
        [&](TapeF64& t2, const std::vector<int>& ids) {
            return weighted_sum(t2, t2.linear(ids[0], ids[1], ids[2]), Pcg32(9));
        });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("conv2d matches an independent padded reference") {
    Pcg32 rng(16);
    for (auto [stride, pad] : {std::pair{1, 1}, {2, 0}, {2, 1}}) {
        int n = 2, ci = 3, h = 7, w = 6, co = 4, kh = 3, kw = 3;
        auto x = rand_vec(rng, n * ci * h * w);
        auto k = rand_vec(rng, co * ci * kh * kw);
        int oh = 0, ow = 0;
        auto want = conv_reference(x, n, ci, h, w, k, co, kh, kw, stride, pad, oh, ow);

        Tape t;
        std::vector<float> xf(x.begin(), x.end()), kf(k.begin(), k.end());
        auto y = t.conv2d(t.leaf(Shape{n, ci, h, w}, xf, false),
                          t.leaf(Shape{co, ci, kh, kw}, kf, false), stride, pad);
        REQUIRE(t.shape(y) == Shape{n, co, oh, ow});
        double worst = 0.0;
        for (size_t i = 0; i < want.size(); ++i)
            worst = std::max(worst, std::abs(t.val(y)[i] - want[i]));
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("conv2d with a one-pixel identity kernel reproduces the input") {
    Pcg32 rng(17);
    int c = 3;
    std::vector<float> x(static_cast<size_t>(2) * c * 4 * 5);
    for (float& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    std::vector<float> k(static_cast<size_t>(c) * c, 0.0f);
    for (int i = 0; i < c; ++i) k[static_cast<size_t>(i) * c + i] = 1.0f;

    Tape t;
    auto y = t.conv2d(t.leaf(Shape{2, c, 4, 5}, x, false), t.leaf(Shape{c, c, 1, 1}, k, false),
                      1, 0);
    CHECK(t.val(y) == x);
}

TEST_CASE("conv gradients match finite differences") {
    Pcg32 rng(18);
    auto x = rand_vec(rng, 1 * 2 * 5 * 5);
    auto k = rand_vec(rng, 3 * 2 * 3 * 3);
    for (auto [stride, pad] : {std::pair{1, 1}, {2, 1}}) {
        auto res = check_gradients(
            {{Shape{1, 2, 5, 5}, x}, {Shape{3, 2, 3, 3}, k}},
            [&, stride = stride, pad = pad](TapeF64& t, const std::vector<int>& ids) {
                return weighted_sum(t, t.conv2d(ids[0], ids[1], stride, pad), Pcg32(21));
            });
        CHECK(res.max_rel_err < 1e-4);
    }
}

TEST_CASE("conv2d_transpose is the adjoint of conv2d") {
    Pcg32 rng(19);
    int n = 1, ci = 2, h = 6, w = 5, co = 3, k = 3, stride = 2, pad = 1;
    auto x = rand_vec(rng, n * ci * h * w);
    auto kern = rand_vec(rng, co * ci * k * k);

    TapeF64 t;
    auto xid = t.leaf(Shape{n, ci, h, w}, x, true);
    auto kid = t.constant(Shape{co, ci, k, k}, kern);
    auto cx = t.conv2d(xid, kid, stride, pad);
    auto y = rand_vec(rng, t.shape(cx).count());

    // <conv(x), y> == <x, conv_transpose(y)> with the same kernel.
    double lhs = 0.0;
    for (int i = 0; i < t.shape(cx).count(); ++i) lhs += t.val(cx)[i] * y[i];
    auto yid = t.leaf(t.shape(cx), y, false);
    auto tx = t.conv2d_transpose(yid, kid, stride, pad, h, w);
    REQUIRE(t.shape(tx) == t.shape(xid));
    double rhs = 0.0;
    for (int i = 0; i < t.shape(tx).count(); ++i) rhs += t.val(tx)[i] * x[i];
    CHECK(std::abs(lhs - rhs) < 1e-9 * std::max(1.0, std::abs(lhs)));

    // The same contraction is what backward computes for the conv input.
    auto loss = t.sum(t.mul(cx, yid));
    t.backward(loss);
    double worst = 0.0;
    for (int i = 0; i < t.shape(xid).count(); ++i)
        worst = std::max(worst, std::abs(t.grad(xid)[i] - t.val(tx)[i]));
    CHECK(worst < 1e-9);
}

TEST_CASE("conv2d_transpose default output size and gradients") {
    Pcg32 rng(20);
    int stride = 2, pad = 1, k = 3;
    auto x = rand_vec(rng, 1 * 3 * 4 * 4);
    auto kern = rand_vec(rng, 3 * 2 * k * k);
    TapeF64 t;
    auto y = t.conv2d_transpose(t.leaf(Shape{1, 3, 4, 4}, x, false),
                                t.leaf(Shape{3, 2, k, k}, kern, false), stride, pad);
    CHECK(t.shape(y) == Shape{1, 2, (4 - 1) * stride - 2 * pad + k, (4 - 1) * stride - 2 * pad + k});

    auto res = check_gradients(
        {{Shape{1, 3, 4, 4}, x}, {Shape{3, 2, k, k}, kern}},
        [&](TapeF64& t2, const std::vector<int>& ids) {
            return weighted_sum(t2, t2.conv2d_transpose(ids[0], ids[1], stride, pad), Pcg32(22));
        });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("depthwise_conv2d matches per-channel conv2d and differentiates") {
    Pcg32 rng(23);
    int c = 3, h = 6, w = 5, k = 3;
    auto x = rand_vec(rng, c * h * w);
    auto kern = rand_vec(rng, c * k * k);

    TapeF64 t;
    auto y = t.depthwise_conv2d(t.leaf(Shape{1, c, h, w}, x, false),
                                t.leaf(Shape{c, 1, k, k}, kern, false), 1, 1);
    for (int ch = 0; ch < c; ++ch) {
        std::vector<double> xc(x.begin() + static_cast<size_t>(ch) * h * w,
                               x.begin() + static_cast<size_t>(ch + 1) * h * w);
        std::vector<double> kc(kern.begin() + static_cast<size_t>(ch) * k * k,
                               kern.begin() + static_cast<size_t>(ch + 1) * k * k);
        int oh = 0, ow = 0;
        auto want = conv_reference(xc, 1, 1, h, w, kc, 1, k, k, 1, 1, oh, ow);
        for (int i = 0; i < h * w; ++i)
            CHECK(std::abs(t.val(y)[static_cast<size_t>(ch) * h * w + i] - want[i]) < 1e-12);
    }

    auto res = check_gradients(
        {{Shape{1, c, h, w}, x}, {Shape{c, 1, k, k}, kern}},
        [&](TapeF64& t2, const std::vector<int>& ids) {
            return weighted_sum(t2, t2.depthwise_conv2d(ids[0], ids[1], 1, 1), Pcg32(24));
        });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("pooling and upsampling preserve constants and differentiate") {
    Tape t;
    std::vector<float> flat(static_cast<size_t>(2 * 3 * 4 * 6), 0.75f);
    auto x = t.leaf(Shape{2, 3, 4, 6}, flat, false);
    for (float v : t.val(t.avg_pool2x(x))) CHECK(v == 0.75f);
    for (float v : t.val(t.bilinear_upsample2x(x))) CHECK(v == doctest::Approx(0.75f));

    Pcg32 rng(25);
    Shape s{1, 2, 4, 6};
    auto a = rand_vec(rng, s.count());
    auto res = check_gradients({{s, a}}, [&](TapeF64& t2, const std::vector<int>& ids) {
        auto y = t2.bilinear_upsample2x(t2.avg_pool2x(ids[0]));
        return weighted_sum(t2, y, Pcg32(26));
    });
    CHECK(res.max_rel_err < 1e-4);

    CHECK_THROWS_WITH_AS(t.avg_pool2x(t.leaf(Shape{1, 1, 3, 4}, std::vector<float>(12), false)),
                         doctest::Contains("even"), std::runtime_error);
}

TEST_CASE("layer_norm zeroes constant-across-channel inputs and differentiates") {
    Tape t;
    int n = 1, c = 4, h = 3, w = 2;
    std::vector<float> x(static_cast<size_t>(n) * c * h * w);
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h * w; ++i)
            x[static_cast<size_t>(ch) * h * w + i] = 0.3f * i - 1.0f;  // same for every channel
    auto y = t.layer_norm(t.leaf(Shape{n, c, h, w}, x, false),
                          t.leaf(Shape{c}, std::vector<float>(c, 1.0f), false),
                          t.leaf(Shape{c}, std::vector<float>(c, 0.0f), false));
    for (float v : t.val(y)) CHECK(v == 0.0f);

    Pcg32 rng(27);
    Shape s{2, 3, 2, 2};
    auto a = rand_vec(rng, s.count());
    auto gamma = rand_vec_offzero(rng, 3, 0.5, 1.5);
    auto beta = rand_vec(rng, 3);
    auto res = check_gradients(
        {{s, a}, {Shape{3}, gamma}, {Shape{3}, beta}},
        [&](TapeF64& t2, const std::vector<int>& ids) {
            return weighted_sum(t2, t2.layer_norm(ids[0], ids[1], ids[2]), Pcg32(28));
        });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("batch_norm training moments, running update, eval mode") {
    Pcg32 rng(29);
    int n = 4, c = 2, h = 6, w = 6;
    std::vector<float> x(static_cast<size_t>(n) * c * h * w);
    for (float& v : x) v = static_cast<float>(rng.normal(0.5, 2.0));
    Tape t;
    std::vector<float> rm(c, 0.0f), rv(c, 1.0f), nm, nv;
    auto xid = t.leaf(Shape{n, c, h, w}, x, false);
    auto gamma = t.leaf(Shape{c}, std::vector<float>(c, 1.0f), false);
    auto beta = t.leaf(Shape{c}, std::vector<float>(c, 0.0f), false);
    auto y = t.batch_norm(xid, gamma, beta, rm, rv, true, 0.1f, &nm, &nv);

    for (int ch = 0; ch < c; ++ch) {
        double mean = 0.0, var = 0.0;
        int cnt = n * h * w;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < h * w; ++i)
                mean += t.val(y)[(static_cast<size_t>(b) * c + ch) * h * w + i];
        mean /= cnt;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < h * w; ++i) {
                double d = t.val(y)[(static_cast<size_t>(b) * c + ch) * h * w + i] - mean;
                var += d * d;
            }
        var /= cnt;
        CHECK(std::abs(mean) < 1e-3);
        CHECK(std::abs(var - 1.0) < 1e-2);

        double bm = 0.0;
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < h * w; ++i)
                bm += x[(static_cast<size_t>(b) * c + ch) * h * w + i];
        bm /= cnt;
        CHECK(nm[ch] == doctest::Approx(0.9 * 0.0 + 0.1 * bm).epsilon(1e-4));
    }

    // Eval mode applies the running stats elementwise.
    std::vector<float> em = {0.5f, -0.25f}, ev = {4.0f, 0.25f};
    auto ye = t.batch_norm(xid, gamma, beta, em, ev, false, 0.1f);
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h * w; ++i) {
            float xi = x[static_cast<size_t>(ch) * h * w + i];
            float want = (xi - em[ch]) / std::sqrt(ev[ch] + 1e-5f);
            CHECK(t.val(ye)[static_cast<size_t>(ch) * h * w + i] ==
                  doctest::Approx(want).epsilon(1e-5));
        }

    Pcg32 rng2(30);
    Shape s{3, 2, 2, 2};
    auto a = rand_vec(rng2, s.count());
    auto gm = rand_vec_offzero(rng2, 2, 0.5, 1.5);
    auto bt = rand_vec(rng2, 2);
    std::vector<double> rm2(2, 0.1), rv2(2, 0.9);
    for (bool training : {true, false}) {
        auto res = check_gradients(
            {{s, a}, {Shape{2}, gm}, {Shape{2}, bt}},
            [&](TapeF64& t2, const std::vector<int>& ids) {
                return weighted_sum(
                    t2, t2.batch_norm(ids[0], ids[1], ids[2], rm2, rv2, training, 0.1), Pcg32(31));
            });
        CHECK(res.max_rel_err < 1e-4);
    }
}

TEST_CASE("kl_divergence hand values and gradients") {
    Tape t;
    auto zero = t.kl_divergence(t.leaf(Shape{1}, {0.0f}, false), t.leaf(Shape{1}, {0.0f}, false));
    CHECK(t.scalar(zero) == 0.0f);
    auto half = t.kl_divergence(t.leaf(Shape{1}, {1.0f}, false), t.leaf(Shape{1}, {0.0f}, false));
    CHECK(t.scalar(half) == doctest::Approx(0.5).epsilon(1e-6));

    Pcg32 rng(32);
    Shape s{2, 4};
    auto mu = rand_vec(rng, s.count());
    auto lv = rand_vec(rng, s.count(), -1.0, 1.0);
    double want = 0.0;
    for (int i = 0; i < s.count(); ++i)
        want += -0.5 * (1.0 + lv[i] - mu[i] * mu[i] - std::exp(lv[i]));
    TapeF64 t2;
    auto k = t2.kl_divergence(t2.leaf(s, mu, false), t2.leaf(s, lv, false));
    CHECK(std::abs(t2.scalar(k) - want) < 1e-6 * std::max(1.0, std::abs(want)));

    auto res = check_gradients({{s, mu}, {s, lv}},
                               [&](TapeF64& t3, const std::vector<int>& ids) {
                                   return t3.kl_divergence(ids[0], ids[1]);
                               });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("backward rejects non-scalar outputs and mismatched shapes") {
    Tape t;
    auto x = t.leaf(Shape{2, 2}, std::vector<float>(4, 1.0f), true);
    CHECK_THROWS_WITH_AS(t.backward(x), doctest::Contains("scalar"), std::runtime_error);
    auto y = t.leaf(Shape{4}, std::vector<float>(4, 1.0f), true);
    CHECK_THROWS_WITH_AS(t.add(x, y), doctest::Contains("2x2"), std::runtime_error);
    CHECK_THROWS_WITH_AS(t.reshape(x, Shape{5}), doctest::Contains("reshape"),
                         std::runtime_error);
}

TEST_CASE("gradients of unused leaves are zero") {
    Tape t;
    auto x = t.leaf(Shape{3}, {1.0f, 2.0f, 3.0f}, true);
    auto y = t.leaf(Shape{3}, {4.0f, 5.0f, 6.0f}, true);
    t.backward(t.sum(t.mul(x, x)));
    CHECK(t.grad(y) == std::vector<float>{0.0f, 0.0f, 0.0f});
    CHECK(t.grad(x) == std::vector<float>{2.0f, 4.0f, 6.0f});
}

}  // TEST_SUITE tensor

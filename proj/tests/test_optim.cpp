#include <cstring>

#include "doctest.h"
#include "drape/adam.hpp"
#include "drape/rng.hpp"
#include "drape/tensor.hpp"

using namespace drape;

TEST_SUITE("optim") {

TEST_CASE("zero gradient leaves parameters untouched") {
    Param p("w", Shape{3}, {1.0f, -2.0f, 0.5f});
    auto before = p.value;
    Adam opt;
    zero_grad({&p});
    opt.step({&p});
    opt.step({&p});
    CHECK(p.value == before);
}

TEST_CASE("first step moves by roughly the learning rate") {
    AdamConfig cfg;
    cfg.lr = 1e-4f;
    for (float g : {0.5f, 1.0f, -2.0f, 1e-3f}) {
        Param p("w", Shape{1}, {1.0f});
        p.grad = {g};
        Adam opt(cfg);
        opt.step({&p});
        float moved = 1.0f - p.value[0];
        // Bias correction makes the first update lr * g / (|g| + eps).
        CHECK(moved == doctest::Approx(cfg.lr * (g > 0 ? 1.0 : -1.0)).epsilon(1e-4));
    }
}

TEST_CASE("converges on a convex quadratic") {
    Param p("x", Shape{1}, {0.0f});
    AdamConfig cfg;
    cfg.lr = 0.02f;
    Adam opt(cfg);
    for (int i = 0; i < 3000; ++i) {
        p.grad = {2.0f * (p.value[0] - 3.0f)};
        opt.step({&p});
    }
    CHECK(std::abs(p.value[0] - 3.0f) < 0.05f);
}

TEST_CASE("frozen parameters are skipped and get no gradient") {
    Param w("w", Shape{2}, {1.0f, 2.0f});
    Param frozen("f", Shape{2}, {3.0f, 4.0f});
    frozen.frozen = true;

    Tape t;
    BoundParams<float> bound;
    auto wid = bound.bind(t, w);
    auto fid = bound.bind(t, frozen);
    auto loss = t.sum(t.mul(t.add(wid, fid), t.add(wid, fid)));
    t.backward(loss);
    zero_grad({&w, &frozen});
    bound.pull_grads(t);
    CHECK(w.grad[0] != 0.0f);
    CHECK(frozen.grad == std::vector<float>{0.0f, 0.0f});

    auto before = frozen.value;
    Adam opt;
    opt.step({&w, &frozen});
    CHECK(frozen.value == before);
    CHECK(w.value[0] != 1.0f);
}

TEST_CASE("training steps are bitwise reproducible") {
    auto run = [](uint64_t seed) {
        Pcg32 rng(seed);
        Param w("conv", Shape{2, 1, 3, 3}, std::vector<float>(18));
        for (float& v : w.value) v = static_cast<float>(rng.normal(0.0, 0.2));
        std::vector<float> x(static_cast<size_t>(1) * 1 * 6 * 6);
        for (float& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));

        Adam opt;
        for (int step = 0; step < 5; ++step) {
            Tape t;
            BoundParams<float> bound;
            auto wid = bound.bind(t, w);
            auto y = t.conv2d(t.leaf(Shape{1, 1, 6, 6}, x, false), wid, 1, 1);
            auto loss = t.mean(t.mul(y, y));
            t.backward(loss);
            zero_grad({&w});
            bound.pull_grads(t);
            opt.step({&w});
        }
        return w.value;
    };
    auto a = run(99);
    auto b = run(99);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
    CHECK(run(100) != a);
}

TEST_CASE("descends a small conv net loss") {
    Pcg32 rng(7);
    Param w("k", Shape{1, 1, 3, 3}, std::vector<float>(9));
    for (float& v : w.value) v = static_cast<float>(rng.normal(0.0, 0.3));
    std::vector<float> x(static_cast<size_t>(1) * 1 * 8 * 8), target(x.size());
    for (float& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (size_t i = 0; i < target.size(); ++i) target[i] = 0.5f * x[i];

    AdamConfig cfg;
    cfg.lr = 0.01f;
    Adam opt(cfg);
    float first = 0.0f, last = 0.0f;
    for (int step = 0; step < 200; ++step) {
        Tape t;
        BoundParams<float> bound;
        auto y = t.conv2d(t.leaf(Shape{1, 1, 8, 8}, x, false), bound.bind(t, w), 1, 1);
        auto d = t.sub(y, t.leaf(Shape{1, 1, 8, 8}, target, false));
        auto loss = t.mean(t.mul(d, d));
        if (step == 0) first = t.scalar(loss);
        last = t.scalar(loss);
        t.backward(loss);
        zero_grad({&w});
        bound.pull_grads(t);
        opt.step({&w});
    }
    CHECK(last < 0.1f * first);
}

}  // TEST_SUITE optim

#include "doctest.h"
#include "drape/grad_check.hpp"
#include "drape/msssim.hpp"
#include "drape/rng.hpp"

using namespace drape;

namespace {

std::vector<float> noisy(const std::vector<float>& x, double amplitude, uint64_t seed) {
    Pcg32 rng(seed);
    std::vector<float> out = x;
    for (float& v : out) v += static_cast<float>(rng.uniform(-amplitude, amplitude));
    return out;
}

}  // namespace

TEST_SUITE("msssim") {

TEST_CASE("identical images score one") {
    Pcg32 rng(41);
    Shape s{1, 3, 32, 32};
    std::vector<float> x(s.count());
    for (float& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    std::vector<uint8_t> mask(32 * 32, 1);

    Tape t;
    auto a = t.leaf(s, x, false);
    auto score = ms_ssim(t, a, a, mask);
    CHECK(t.scalar(score) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("symmetric in its arguments") {
    Pcg32 rng(42);
    Shape s{1, 1, 16, 16};
    std::vector<float> x(s.count()), y(s.count());
    for (float& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (float& v : y) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    std::vector<uint8_t> mask(16 * 16, 1);

    Tape t;
    auto a = t.leaf(s, x, false);
    auto b = t.leaf(s, y, false);
    CHECK(t.scalar(ms_ssim(t, a, b, mask, 0, 5)) == t.scalar(ms_ssim(t, b, a, mask, 0, 5)));
}

TEST_CASE("more noise scores lower") {
    Pcg32 rng(43);
    Shape s{1, 1, 32, 32};
    std::vector<float> x(s.count());
    for (int i = 0; i < s.count(); ++i)
        x[i] = static_cast<float>(0.6 * std::sin(i * 0.21) + 0.2 * rng.uniform(-1.0, 1.0));
    std::vector<uint8_t> mask(32 * 32, 1);

    Tape t;
    auto a = t.leaf(s, x, false);
    auto small = t.leaf(s, noisy(x, 0.02, 7), false);
    auto large = t.leaf(s, noisy(x, 0.3, 7), false);
    float near = t.scalar(ms_ssim(t, a, small, mask));
    float far = t.scalar(ms_ssim(t, a, large, mask));
    CHECK(near > 0.9f);
    CHECK(far < near - 0.02f);
}

TEST_CASE("pixels with no fully valid window cannot affect the score") {
    Pcg32 rng(44);
    Shape s{1, 1, 16, 16};
    std::vector<float> x(s.count());
    for (float& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    std::vector<uint8_t> mask(16 * 16, 1);
    for (int y = 0; y < 16; ++y)
        for (int col = 10; col < 16; ++col) mask[static_cast<size_t>(y) * 16 + col] = 0;

    Tape t;
    auto a = t.leaf(s, x, false);
    auto clean = t.leaf(s, x, false);
    auto corrupted_vals = x;
    for (int y = 0; y < 16; ++y) corrupted_vals[static_cast<size_t>(y) * 16 + 15] += 50.0f;
    auto corrupted = t.leaf(s, corrupted_vals, false);
    // Window 3: every window containing column 15 also contains a masked
    // pixel, so the corruption is invisible at every level.
    CHECK(t.scalar(ms_ssim(t, a, clean, mask, 2, 3)) ==
          t.scalar(ms_ssim(t, a, corrupted, mask, 2, 3)));
}

TEST_CASE("levels clamp to the window size and tiny images fail") {
    Pcg32 rng(45);
    Shape s{1, 1, 16, 16};
    std::vector<float> x(s.count()), y(s.count());
    for (float& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (float& v : y) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    std::vector<uint8_t> mask(16 * 16, 1);

    Tape t;
    auto a = t.leaf(s, x, false);
    auto b = t.leaf(s, y, false);
    // 16 -> 8 fits an 11-pixel window only once; asking for 5 levels clamps.
    CHECK(t.scalar(ms_ssim(t, a, b, mask, 5, 11)) == t.scalar(ms_ssim(t, a, b, mask, 1, 11)));

    std::vector<uint8_t> tiny_mask(8 * 8, 1);
    auto small = t.leaf(Shape{1, 1, 8, 8}, std::vector<float>(64, 0.0f), false);
    CHECK_THROWS_WITH_AS(ms_ssim(t, small, small, tiny_mask, 0, 11),
                         doctest::Contains("window"), std::runtime_error);

    std::vector<uint8_t> empty_mask(16 * 16, 0);
    CHECK_THROWS_WITH_AS(ms_ssim(t, a, b, empty_mask, 1, 3),
                         doctest::Contains("valid window"), std::runtime_error);
}

TEST_CASE("gradients match finite differences") {
    Pcg32 rng(46);
    Shape s{1, 1, 8, 8};
    std::vector<double> x(s.count()), y(s.count());
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    for (size_t i = 0; i < y.size(); ++i) y[i] = x[i] + rng.uniform(-0.2, 0.2);
    std::vector<uint8_t> mask(8 * 8, 1);
    mask[0] = 0;
    mask[1] = 0;  // both holes share one coarse pixel, so level 1 stays valid

    auto res = check_gradients({{s, x}, {s, y}},
                               [&](TapeF64& t, const std::vector<int>& ids) {
                                   return ms_ssim(t, ids[0], ids[1], mask, 2, 3);
                               });
    CHECK(res.checked == 128);
    CHECK(res.max_rel_err < 1e-4);
}

}  // TEST_SUITE msssim

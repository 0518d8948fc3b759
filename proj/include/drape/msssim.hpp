#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "drape/tensor.hpp"

namespace drape {

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> k(static_cast<size_t>(size) * size);
    double half = (size - 1) * 0.5, total = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double d2 = (y - half) * (y - half) + (x - half) * (x - half);
            double v = std::exp(-d2 / (2.0 * sigma * sigma));
            k[static_cast<size_t>(y) * size + x] = v;
            total += v;
        }
    for (double& v : k) v /= total;
    return k;
}

// 1 where the whole window sits inside the mask, using valid (no-pad)
// window placement.
inline std::vector<uint8_t> erode_mask(const std::vector<uint8_t>& mask, int h, int w, int win) {
    int oh = h - win + 1, ow = w - win + 1;
    std::vector<uint8_t> out(static_cast<size_t>(oh) * ow, 0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            bool all = true;
            for (int u = 0; u < win && all; ++u)
                for (int v = 0; v < win; ++v)
                    if (!mask[static_cast<size_t>(y + u) * w + x + v]) {
                        all = false;
                        break;
                    }
            out[static_cast<size_t>(y) * ow + x] = all ? 1 : 0;
        }
    return out;
}

// A coarse pixel is valid only when all four parents are.
inline std::vector<uint8_t> downscale_mask_all(const std::vector<uint8_t>& mask, int h, int w) {
    std::vector<uint8_t> out(static_cast<size_t>(h / 2) * (w / 2));
    for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < w / 2; ++x)
            out[static_cast<size_t>(y) * (w / 2) + x] =
                mask[static_cast<size_t>(2 * y) * w + 2 * x] &&
                mask[static_cast<size_t>(2 * y) * w + 2 * x + 1] &&
                mask[static_cast<size_t>(2 * y + 1) * w + 2 * x] &&
                mask[static_cast<size_t>(2 * y + 1) * w + 2 * x + 1];
    return out;
}

}  // namespace detail

// Multi-scale SSIM over valid windows only: a window counts when it lies
// fully inside the mask, and coarser masks keep a pixel only when all four
// parents are valid. Contrast terms use the standard level weights
// (renormalized when fewer levels fit); means are clamped at 1e-4 before the
// fractional powers. Returns a scalar node; 1 at identical inputs.
template <typename T>
typename TapeT<T>::Id ms_ssim(TapeT<T>& tape, typename TapeT<T>::Id a, typename TapeT<T>::Id b,
                              const std::vector<uint8_t>& mask, int levels = 0, int window = 11,
                              double sigma = 1.5, double value_range = 2.0) {
    using Id = typename TapeT<T>::Id;
    const Shape& s = tape.shape(a);
    if (s.ndim != 4 || tape.shape(b) != s)
        throw std::runtime_error("ms_ssim: inputs " + tape.shape(a).str() + " vs " +
                                 tape.shape(b).str());
    int h = s.d[2], w = s.d[3], c = s.d[1], n = s.d[0];
    if (static_cast<int>(mask.size()) != h * w)
        throw std::runtime_error("ms_ssim: mask size does not match " + s.str());

    static const double kLevelWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    int max_levels = 0;
    for (int hh = h, ww = w; hh >= window && ww >= window && max_levels < 5;
         hh /= 2, ww /= 2) {
        ++max_levels;
        if (hh % 2 || ww % 2) break;
    }
    if (max_levels == 0)
        throw std::runtime_error("ms_ssim: image " + s.str() + " smaller than the " +
                                 std::to_string(window) + "-pixel window");
    if (levels <= 0 || levels > max_levels) levels = max_levels;
    double weight_total = 0.0;
    for (int l = 0; l < levels; ++l) weight_total += kLevelWeights[l];

    const double c1 = 0.01 * value_range * 0.01 * value_range;
    const double c2 = 0.03 * value_range * 0.03 * value_range;
    std::vector<double> win = detail::gaussian_window(window, sigma);
    std::vector<uint8_t> level_mask = mask;

    Id result = tape.scalar_const(T(1));
    Id xa = a, xb = b;
    int lh = h, lw = w;
    for (int l = 0; l < levels; ++l) {
        std::vector<uint8_t> valid = detail::erode_mask(level_mask, lh, lw, window);
        int vh = lh - window + 1, vw = lw - window + 1;
        int valid_count = 0;
        for (uint8_t v : valid) valid_count += v;
        if (valid_count == 0)
            throw std::runtime_error("ms_ssim: no fully valid window at level " +
                                     std::to_string(l));

        std::vector<T> kern(static_cast<size_t>(c) * window * window);
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < window * window; ++i)
                kern[static_cast<size_t>(ch) * window * window + i] = static_cast<T>(win[i]);
        Id kid = tape.constant(Shape{c, 1, window, window}, kern);

        Id mu_a = tape.depthwise_conv2d(xa, kid, 1, 0);
        Id mu_b = tape.depthwise_conv2d(xb, kid, 1, 0);
        Id e_aa = tape.depthwise_conv2d(tape.mul(xa, xa), kid, 1, 0);
        Id e_bb = tape.depthwise_conv2d(tape.mul(xb, xb), kid, 1, 0);
        Id e_ab = tape.depthwise_conv2d(tape.mul(xa, xb), kid, 1, 0);
        Id var_a = tape.sub(e_aa, tape.mul(mu_a, mu_a));
        Id var_b = tape.sub(e_bb, tape.mul(mu_b, mu_b));
        Id cov = tape.sub(e_ab, tape.mul(mu_a, mu_b));

        std::vector<T> vmask(valid.begin(), valid.end());
        auto masked_mean = [&](Id map) {
            Id m = tape.mul_mask(map, vmask);
            return tape.scale(tape.sum(m), T(1) / T(static_cast<double>(valid_count) * c * n));
        };

        Id cs_map = tape.div(tape.add_const(tape.scale(cov, T(2)), static_cast<T>(c2)),
                             tape.add_const(tape.add(var_a, var_b), static_cast<T>(c2)));
        Id cs = tape.clamp_min(masked_mean(cs_map), T(1e-4));
        double wl = kLevelWeights[l] / weight_total;
        if (l == levels - 1) {
            Id l_map = tape.div(
                tape.add_const(tape.scale(tape.mul(mu_a, mu_b), T(2)), static_cast<T>(c1)),
                tape.add_const(tape.add(tape.mul(mu_a, mu_a), tape.mul(mu_b, mu_b)),
                               static_cast<T>(c1)));
            Id lum = tape.clamp_min(masked_mean(l_map), T(1e-4));
            result = tape.mul(result, tape.pow_const(tape.mul(lum, cs), static_cast<T>(wl)));
        } else {
            result = tape.mul(result, tape.pow_const(cs, static_cast<T>(wl)));
            xa = tape.avg_pool2x(xa);
            xb = tape.avg_pool2x(xb);
            level_mask = detail::downscale_mask_all(level_mask, lh, lw);
            lh /= 2;
            lw /= 2;
        }
        (void)vh;
        (void)vw;
    }
    return result;
}

}  // namespace drape

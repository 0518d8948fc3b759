#include "drape/rescale.hpp"

#include <algorithm>
#include <stdexcept>

namespace drape {

namespace {

constexpr double kFar = 1e18;

}  // namespace

UvImage fill_background(const UvImage& img) {
    int h = img.height, w = img.width;
    if (std::find(img.mask.begin(), img.mask.end(), uint8_t(1)) == img.mask.end())
        throw std::runtime_error("fill: mask has no valid pixels");

    // Per-column squared distance to the nearest valid row, with its index.
    // The nearest valid row is the closest one above or below.
    std::vector<double> colsq(img.pixel_count(), kFar);
    std::vector<int> srcy(img.pixel_count(), -1);
    for (int x = 0; x < w; ++x) {
        int last = -1;
        for (int y = 0; y < h; ++y) {
            if (img.mask[static_cast<size_t>(y) * w + x]) last = y;
            if (last >= 0) {
                colsq[static_cast<size_t>(y) * w + x] = double(y - last) * (y - last);
                srcy[static_cast<size_t>(y) * w + x] = last;
            }
        }
        last = -1;
        for (int y = h - 1; y >= 0; --y) {
            if (img.mask[static_cast<size_t>(y) * w + x]) last = y;
            if (last >= 0) {
                double d = double(last - y) * (last - y);
                if (d < colsq[static_cast<size_t>(y) * w + x]) {
                    colsq[static_cast<size_t>(y) * w + x] = d;
                    srcy[static_cast<size_t>(y) * w + x] = last;
                }
            }
        }
    }

    // Per-row lower envelope of the parabolas f_c(x) = colsq[y][c] + (x-c)^2.
    // Columns with no valid pixel never enter the envelope; at least one
    // column is finite, so every row finds a source.
    UvImage out(h, w, img.channels);
    out.role = img.role;
    std::vector<int> v(w);
    std::vector<double> z(static_cast<size_t>(w) + 1);
    for (int y = 0; y < h; ++y) {
        const double* g = &colsq[static_cast<size_t>(y) * w];
        int k = -1;
        for (int x = 0; x < w; ++x) {
            if (g[x] >= kFar) continue;
            double s = 0;
            while (k >= 0) {
                int q = v[k];
                s = (g[x] + double(x) * x - g[q] - double(q) * q) / (2.0 * (x - q));
                if (s <= z[k])
                    --k;
                else
                    break;
            }
            if (k < 0) {
                k = 0;
                v[0] = x;
                z[0] = -kFar;
            } else {
                v[++k] = x;
                z[k] = s;
            }
            z[k + 1] = kFar;
        }
        int ki = 0;
        for (int x = 0; x < w; ++x) {
            while (z[ki + 1] < x) ++ki;
            int sx = v[ki];
            int sy = srcy[static_cast<size_t>(y) * w + sx];
            for (int c = 0; c < img.channels; ++c) out.at(c, y, x) = img.at(c, sy, sx);
        }
    }
    std::fill(out.mask.begin(), out.mask.end(), uint8_t(1));
    return out;
}

UvImage downscale2x(const UvImage& img) {
    if (img.height % 2 || img.width % 2)
        throw std::runtime_error("downscale: needs even dimensions, got " +
                                 std::to_string(img.height) + "x" + std::to_string(img.width));
    UvImage filled = fill_background(img);
    UvImage out(img.height / 2, img.width / 2, img.channels);
    out.role = img.role;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.mask_at(y, x) = img.mask_at(2 * y, 2 * x) || img.mask_at(2 * y, 2 * x + 1) ||
                                        img.mask_at(2 * y + 1, 2 * x) ||
                                        img.mask_at(2 * y + 1, 2 * x + 1)
                                    ? 1
                                    : 0;
    for (int c = 0; c < out.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                out.at(c, y, x) = 0.25f * (filled.at(c, 2 * y, 2 * x) +
                                           filled.at(c, 2 * y, 2 * x + 1) +
                                           filled.at(c, 2 * y + 1, 2 * x) +
                                           filled.at(c, 2 * y + 1, 2 * x + 1));
    out.zero_background();
    return out;
}

UpscalerNet::UpscalerNet(int kernel_, int channels_, Pcg32& rng)
    : kernel(kernel_),
      channels(channels_),
      c1("up.c1", channels_, 256, kernel_, 1, kernel_ / 2, rng),
      c2("up.c2", 256, 128, kernel_, 1, kernel_ / 2, rng),
      c3("up.c3", 128, 64, kernel_, 1, kernel_ / 2, rng),
      c4("up.c4", 64, 32, kernel_, 1, kernel_ / 2, rng),
      c5("up.c5", 32, channels_, kernel_, 1, kernel_ / 2, rng),
      n1("up.n1", 256),
      n2("up.n2", 128),
      n3("up.n3", 64),
      n4("up.n4", 32) {
    if (kernel_ < 1 || kernel_ % 2 == 0)
        throw std::runtime_error("upscaler: kernel must be odd and positive");
}

std::vector<Param*> UpscalerNet::params() {
    std::vector<Param*> out;
    c1.collect(out);
    n1.collect(out);
    c2.collect(out);
    n2.collect(out);
    c3.collect(out);
    n3.collect(out);
    c4.collect(out);
    n4.collect(out);
    c5.collect(out);
    return out;
}

void UpscalerNet::save(const std::string& path) {
    NamedTensorArchive ar;
    ar.add(NamedTensor::make_u32("up.meta", {2},
                                 {static_cast<uint32_t>(kernel), static_cast<uint32_t>(channels)}));
    save_params(params(), ar);
    ar.save(path);
}

UpscalerNet UpscalerNet::load(const std::string& path) {
    NamedTensorArchive ar = NamedTensorArchive::load(path);
    if (!ar.has("up.meta")) throw std::runtime_error("upscaler: archive has no up.meta");
    const NamedTensor& meta = ar.get("up.meta");
    if (meta.dtype != Dtype::u32 || meta.u32.size() != 2)
        throw std::runtime_error("upscaler: malformed up.meta");
    Pcg32 rng(0);
    UpscalerNet net(static_cast<int>(meta.u32[0]), static_cast<int>(meta.u32[1]), rng);
    load_params(net.params(), ar);
    net.freeze();
    return net;
}

UvImage upscale2x(UpscalerNet& net, const UvImage& img, const std::vector<uint8_t>& target_mask) {
    size_t want = static_cast<size_t>(2 * img.height) * (2 * img.width);
    if (target_mask.size() != want)
        throw std::runtime_error("upscale: target mask has " + std::to_string(target_mask.size()) +
                                 " pixels, expected " + std::to_string(2 * img.height) + "x" +
                                 std::to_string(2 * img.width));
    Tape t;
    BoundParams<float> bp;
    int x = t.constant(Shape{1, img.channels, img.height, img.width}, img.data);
    int up = net.forward(t, bp, x, img.mask, false);
    UvImage out(2 * img.height, 2 * img.width, img.channels);
    out.role = img.role;
    out.data = t.val(up);
    out.mask = target_mask;
    out.zero_background();
    return out;
}

UvImage bilinear_upscale2x(const UvImage& img, const std::vector<uint8_t>& target_mask) {
    size_t want = static_cast<size_t>(2 * img.height) * (2 * img.width);
    if (target_mask.size() != want)
        throw std::runtime_error("upscale: target mask has " + std::to_string(target_mask.size()) +
                                 " pixels, expected " + std::to_string(2 * img.height) + "x" +
                                 std::to_string(2 * img.width));
    Tape t;
    int x = t.constant(Shape{1, img.channels, img.height, img.width}, img.data);
    int up = t.bilinear_upsample2x(x);
    UvImage out(2 * img.height, 2 * img.width, img.channels);
    out.role = img.role;
    out.data = t.val(up);
    out.mask = target_mask;
    out.zero_background();
    return out;
}

UpscalerNet train_upscaler(const std::vector<std::pair<UvImage, UvImage>>& pairs, int steps,
                           Pcg32& rng, int kernel, int msssim_window,
                           std::vector<float>* step_loss) {
    if (pairs.empty()) throw std::runtime_error("train_upscaler: empty dataset");
    for (const auto& [low, high] : pairs) {
        if (high.height != 2 * low.height || high.width != 2 * low.width ||
            high.channels != low.channels)
            throw std::runtime_error("train_upscaler: pair " + std::to_string(low.height) + "x" +
                                     std::to_string(low.width) + " -> " +
                                     std::to_string(high.height) + "x" +
                                     std::to_string(high.width) + " is not a 2x pair");
    }
    UpscalerNet net(kernel, pairs[0].first.channels, rng);
    std::vector<Param*> params = net.params();
    Adam opt;
    const int batch = 4;
    for (int step = 0; step < steps; ++step) {
        Tape t;
        BoundParams<float> bp;
        int total = -1;
        for (int k = 0; k < batch; ++k) {
            const auto& [low, high] = pairs[rng.next_below(static_cast<uint32_t>(pairs.size()))];
            int x = t.constant(Shape{1, low.channels, low.height, low.width}, low.data);
            int pred = net.forward(t, bp, x, low.mask, true);
            int target = t.constant(Shape{1, high.channels, high.height, high.width}, high.data);
            int score = ms_ssim(t, pred, target, high.mask, 0, msssim_window);
            int item = t.add_const(t.scale(score, -1.0f), 1.0f);
            total = k == 0 ? item : t.add(total, item);
        }
        int loss = t.scale(total, 1.0f / batch);
        zero_grad(params);
        t.backward(loss);
        bp.pull_grads(t);
        opt.step(params);
        if (step_loss) step_loss->push_back(t.scalar(loss));
    }
    net.freeze();
    return net;
}

}  // namespace drape

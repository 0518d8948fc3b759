#pragma once

#include <string>
#include <utility>
#include <vector>

#include "drape/image.hpp"
#include "drape/msssim.hpp"
#include "drape/nn.hpp"

namespace drape {

// Replaces every background pixel with the value of its nearest valid pixel
// (Euclidean pixel distance, exact distance transform). The result has an
// all-valid mask. Idempotent.
UvImage fill_background(const UvImage& img);

// Fill, 2x2 mean, mask = any-of-4-valid, background re-zeroed.
UvImage downscale2x(const UvImage& img);

// Five convolutions (256, 128, 64, 32, out) with relu + batch norm after the
// first four and tanh after the last, all same-padded. The network only
// paints background: its output is masked to the invalid region and added to
// the input before bilinear 2x resampling, so valid pixels pass through
// untouched.
struct UpscalerNet {
    int kernel = 7;
    int channels = 3;
    Conv2d c1, c2, c3, c4, c5;
    BatchNorm2d n1, n2, n3, n4;

    UpscalerNet() = default;
    UpscalerNet(int kernel, int channels, Pcg32& rng);

    // x is [1, C, H, W]; valid has H*W entries. Returns the [1, C, 2H, 2W]
    // upsampled combination; combined_out receives the pre-resize node.
    template <typename T>
    int forward(TapeT<T>& t, BoundParams<T>& bp, int x, const std::vector<uint8_t>& valid,
                bool training, int* combined_out = nullptr) {
        const Shape& s = t.shape(x);
        if (s.ndim != 4 || s.d[1] != channels)
            throw std::runtime_error("upscaler: input " + s.str() + " does not have " +
                                     std::to_string(channels) + " channels");
        size_t hw = static_cast<size_t>(s.d[2]) * s.d[3];
        if (valid.size() != hw)
            throw std::runtime_error("upscaler: mask has " + std::to_string(valid.size()) +
                                     " pixels for input " + s.str());
        int y = t.relu(n1.forward(t, bp, c1.forward(t, bp, x), training));
        y = t.relu(n2.forward(t, bp, c2.forward(t, bp, y), training));
        y = t.relu(n3.forward(t, bp, c3.forward(t, bp, y), training));
        y = t.relu(n4.forward(t, bp, c4.forward(t, bp, y), training));
        y = t.tanh_op(c5.forward(t, bp, y));
        std::vector<T> background(hw);
        for (size_t i = 0; i < hw; ++i) background[i] = valid[i] ? T(0) : T(1);
        int combined = t.add(x, t.mul_mask(y, background));
        if (combined_out) *combined_out = combined;
        return t.bilinear_upsample2x(combined);
    }

    std::vector<Param*> params();
    void freeze() { freeze_params(params()); }
    bool frozen() { return all_frozen(params()); }

    void save(const std::string& path);
    static UpscalerNet load(const std::string& path);
};

// Runs the frozen net on img and masks the result to target_mask, which must
// have (2H)*(2W) entries.
UvImage upscale2x(UpscalerNet& net, const UvImage& img, const std::vector<uint8_t>& target_mask);

// Bilinear 2x of the unfilled image, background re-zeroed. The no-network
// baseline the upscaler is compared against.
UvImage bilinear_upscale2x(const UvImage& img, const std::vector<uint8_t>& target_mask);

// Adam over 1 - masked MS-SSIM against the high-res half of each pair,
// batches of 4 drawn with replacement. Returns the net frozen. step_loss, if
// given, receives the loss of every step.
UpscalerNet train_upscaler(const std::vector<std::pair<UvImage, UvImage>>& pairs, int steps,
                           Pcg32& rng, int kernel = 7, int msssim_window = 11,
                           std::vector<float>* step_loss = nullptr);

}  // namespace drape

#pragma once

#include <array>
#include <vector>

#include "drape/image.hpp"

namespace drape {

// Per-channel affine map between world coordinates and the tanh range
// [-1, 1]. lo/hi live in the dataset manifest.
struct NormBounds {
    std::array<float, 3> lo{-1.0f, -1.0f, -1.0f};
    std::array<float, 3> hi{1.0f, 1.0f, 1.0f};

    float scale(int c) const { return (hi[c] - lo[c]) * 0.5f; }
    float offset(int c) const { return (hi[c] + lo[c]) * 0.5f; }
    void validate() const;
};

// Channel-wise min/max over the valid pixels of every image, padded outward
// by pad * range so in-range values stay strictly inside (-1, 1).
NormBounds compute_bounds(const std::vector<const UvImage*>& images, double pad = 0.05);

UvImage normalize_uv(const UvImage& img, const NormBounds& b);
UvImage denormalize_uv(const UvImage& img, const NormBounds& b);

}  // namespace drape

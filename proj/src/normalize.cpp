#include "drape/normalize.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace drape {

void NormBounds::validate() const {
    for (int c = 0; c < 3; ++c) {
        if (!(lo[c] < hi[c])) {
            throw std::runtime_error("bounds: lo must be strictly below hi in channel " +
                                     std::to_string(c));
        }
        if (!std::isfinite(lo[c]) || !std::isfinite(hi[c])) {
            throw std::runtime_error("bounds: non-finite limit in channel " + std::to_string(c));
        }
    }
}

NormBounds compute_bounds(const std::vector<const UvImage*>& images, double pad) {
    if (images.empty()) throw std::runtime_error("bounds: no images");
    std::array<double, 3> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const UvImage* img : images) {
        if (img->channels != 3) throw std::runtime_error("bounds: images must have 3 channels");
        for (int y = 0; y < img->height; ++y) {
            for (int x = 0; x < img->width; ++x) {
                if (!img->mask_at(y, x)) continue;
                for (int c = 0; c < 3; ++c) {
                    double v = img->at(c, y, x);
                    lo[c] = std::min(lo[c], v);
                    hi[c] = std::max(hi[c], v);
                }
            }
        }
    }
    NormBounds b;
    for (int c = 0; c < 3; ++c) {
        if (!(lo[c] <= hi[c])) throw std::runtime_error("bounds: no valid pixels");
        double range = hi[c] - lo[c];
        if (range <= 0.0) range = 1.0;
        b.lo[c] = static_cast<float>(lo[c] - pad * range);
        b.hi[c] = static_cast<float>(hi[c] + pad * range);
    }
    b.validate();
    return b;
}

UvImage normalize_uv(const UvImage& img, const NormBounds& b) {
    b.validate();
    if (img.channels != 3) throw std::runtime_error("normalize: image must have 3 channels");
    UvImage out = img;
    for (int c = 0; c < 3; ++c) {
        float s = 1.0f / b.scale(c);
        float o = b.offset(c);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                out.at(c, y, x) = (img.at(c, y, x) - o) * s;
            }
        }
    }
    out.zero_background();
    return out;
}

UvImage denormalize_uv(const UvImage& img, const NormBounds& b) {
    b.validate();
    if (img.channels != 3) throw std::runtime_error("denormalize: image must have 3 channels");
    UvImage out = img;
    for (int c = 0; c < 3; ++c) {
        float s = b.scale(c);
        float o = b.offset(c);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                out.at(c, y, x) = img.at(c, y, x) * s + o;
            }
        }
    }
    out.zero_background();
    return out;
}

}  // namespace drape

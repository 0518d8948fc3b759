#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace drape {

enum class UvRole { none, body, garment_template, garment_canonical, normals, offsets };

// Float image in CHW layout with a validity mask. Background (mask-false)
// pixels hold exactly 0 in every channel.
struct UvImage {
    int height = 0, width = 0, channels = 0;
    std::vector<float> data;    // size C*H*W, data[(c*H + y)*W + x]
    std::vector<uint8_t> mask;  // size H*W, 1 = valid
    UvRole role = UvRole::none;

    UvImage() = default;
    UvImage(int h, int w, int c)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(c) * h * w, 0.0f),
          mask(static_cast<size_t>(h) * w, 0) {}

    float& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    uint8_t& mask_at(int y, int x) { return mask[static_cast<size_t>(y) * width + x]; }
    uint8_t mask_at(int y, int x) const { return mask[static_cast<size_t>(y) * width + x]; }

    size_t pixel_count() const { return static_cast<size_t>(height) * width; }

    // Forces background pixels to exactly 0 in every channel.
    void zero_background();

    // Throws if sizes are inconsistent, values are non-finite, or a
    // background pixel is nonzero.
    void validate() const;
};

// PFM, colour variant: "PF", width height, scale -1.0 (little endian),
// rows bottom-up, 3 floats per pixel. Requires channels == 3.
void save_pfm(const UvImage& img, const std::string& path);
UvImage load_pfm(const std::string& path);  // mask = all valid

// PGM binary (P5, maxval 255) for masks: valid -> 255, background -> 0.
void save_pgm(const std::vector<uint8_t>& mask, int height, int width,
              const std::string& path);
std::vector<uint8_t> load_pgm(const std::string& path, int& height, int& width);

// 8-bit RGB PNG. Values are mapped affinely from [-1, 1] to [0, 255]
// (0 -> 128); pixels outside the mask render black. Requires channels == 3.
void save_png(const UvImage& img, const std::string& path);

}  // namespace drape

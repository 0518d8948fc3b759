#include "drape/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "drape/io_util.hpp"

namespace drape {

void UvImage::zero_background() {
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (!mask_at(y, x))
                for (int c = 0; c < channels; ++c) at(c, y, x) = 0.0f;
}

void UvImage::validate() const {
    if (data.size() != static_cast<size_t>(channels) * height * width)
        throw std::runtime_error("image: data size does not match dims");
    if (mask.size() != static_cast<size_t>(height) * width)
        throw std::runtime_error("image: mask size does not match dims");
    for (float v : data)
        if (!std::isfinite(v)) throw std::runtime_error("image: non-finite value");
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (!mask_at(y, x))
                for (int c = 0; c < channels; ++c)
                    if (at(c, y, x) != 0.0f)
                        throw std::runtime_error("image: nonzero background at (" +
                                                 std::to_string(y) + "," + std::to_string(x) + ")");
}

void save_pfm(const UvImage& img, const std::string& path) {
    if (img.channels != 3)
        throw std::runtime_error("save_pfm: requires a 3-channel image");
    std::string out = "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                      "\n-1.0\n";
    // Bottom-up row order, interleaved RGB.
    std::vector<float> row(static_cast<size_t>(img.width) * 3);
    for (int y = img.height - 1; y >= 0; --y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) row[x * 3 + c] = img.at(c, y, x);
        out.append(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
    }
    atomic_write_file(path, out);
}

UvImage load_pfm(const std::string& path) {
    std::string bytes = read_file(path);
    std::istringstream header(bytes.substr(0, std::min<size_t>(bytes.size(), 128)));
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    header >> magic >> w >> h >> scale;
    if (magic != "PF" || w <= 0 || h <= 0)
        throw std::runtime_error("load_pfm: not a colour PFM: " + path);
    if (scale >= 0.0)
        throw std::runtime_error("load_pfm: big-endian PFM unsupported: " + path);
    // Payload starts after the single whitespace byte following the scale.
    size_t pos = static_cast<size_t>(header.tellg());
    pos += 1;
    size_t need = static_cast<size_t>(w) * h * 3 * sizeof(float);
    if (pos + need > bytes.size()) throw std::runtime_error("load_pfm: truncated: " + path);

    UvImage img(h, w, 3);
    std::fill(img.mask.begin(), img.mask.end(), uint8_t{1});
    const float* p = reinterpret_cast<const float*>(bytes.data() + pos);
    for (int yy = h - 1; yy >= 0; --yy)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, yy, x) = *p++;
    return img;
}

void save_pgm(const std::vector<uint8_t>& mask, int height, int width,
              const std::string& path) {
    if (mask.size() != static_cast<size_t>(height) * width)
        throw std::runtime_error("save_pgm: mask size does not match dims");
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (uint8_t m : mask) out.push_back(m ? char(255) : char(0));
    atomic_write_file(path, out);
}

std::vector<uint8_t> load_pgm(const std::string& path, int& height, int& width) {
    std::string bytes = read_file(path);
    std::istringstream header(bytes.substr(0, std::min<size_t>(bytes.size(), 128)));
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    header >> magic >> w >> h >> maxval;
    if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
        throw std::runtime_error("load_pgm: not an 8-bit P5 PGM: " + path);
    size_t pos = static_cast<size_t>(header.tellg()) + 1;
    size_t need = static_cast<size_t>(w) * h;
    if (pos + need > bytes.size()) throw std::runtime_error("load_pgm: truncated: " + path);
    height = h;
    width = w;
    std::vector<uint8_t> mask(need);
    for (size_t i = 0; i < need; ++i)
        mask[i] = static_cast<uint8_t>(bytes[pos + i]) >= 128 ? 1 : 0;
    return mask;
}

namespace {

void append_be32(std::string& out, uint32_t v) {
    out.push_back(char((v >> 24) & 0xff));
    out.push_back(char((v >> 16) & 0xff));
    out.push_back(char((v >> 8) & 0xff));
    out.push_back(char(v & 0xff));
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
    append_be32(out, static_cast<uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    uint32_t crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    append_be32(out, crc);
}

}  // namespace

void save_png(const UvImage& img, const std::string& path) {
    if (img.channels != 3)
        throw std::runtime_error("save_png: requires a 3-channel image");
    const int h = img.height, w = img.width;

    // Raw scanlines, filter byte 0 per row.
    std::string raw;
    raw.reserve(static_cast<size_t>(h) * (1 + 3 * w));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = img.mask_at(y, x) ? img.at(c, y, x) * 127.5 + 127.5 : 0.0;
                v = std::clamp(v, 0.0, 255.0);
                raw.push_back(static_cast<char>(std::lround(v)));
            }
        }
    }

    uLongf comp_bound = compressBound(static_cast<uLong>(raw.size()));
    std::string compressed(comp_bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &comp_bound,
                  reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                  6) != Z_OK)
        throw std::runtime_error("save_png: zlib compression failed");
    compressed.resize(comp_bound);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    append_be32(ihdr, static_cast<uint32_t>(w));
    append_be32(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // colour type: truecolour
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", "");
    atomic_write_file(path, out);
}

}  // namespace drape

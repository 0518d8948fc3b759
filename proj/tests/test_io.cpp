#include <doctest.h>
#include <zlib.h>

#include <filesystem>

#include "drape/archive.hpp"
#include "drape/image.hpp"
#include "drape/io_util.hpp"
#include "drape/rng.hpp"
#include "helpers.hpp"

using namespace drape;
using namespace drape::testing;

TEST_SUITE("io") {

TEST_CASE("archive: empty round trip") {
    NamedTensorArchive arc;
    auto path = temp_path("empty.nta");
    arc.save(path);
    auto back = NamedTensorArchive::load(path);
    CHECK(back.count() == 0);
}

TEST_CASE("archive: random tensors round-trip bit exact") {
    Pcg32 rng(101);
    for (int trial = 0; trial < 5; ++trial) {
        NamedTensorArchive arc;
        int n_tensors = 1 + static_cast<int>(rng.next_below(6));
        for (int t = 0; t < n_tensors; ++t) {
            std::string name = "tensor_" + std::to_string(trial) + "_" + std::to_string(t);
            int ndim = 1 + static_cast<int>(rng.next_below(4));
            std::vector<uint64_t> dims;
            uint64_t total = 1;
            for (int d = 0; d < ndim; ++d) {
                dims.push_back(1 + rng.next_below(8));
                total *= dims.back();
            }
            switch (rng.next_below(3)) {
                case 0: {
                    std::vector<float> v(total);
                    for (auto& x : v) x = static_cast<float>(rng.normal());
                    arc.add(NamedTensor::make_f32(name, dims, std::move(v)));
                    break;
                }
                case 1: {
                    std::vector<uint32_t> v(total);
                    for (auto& x : v) x = rng.next_u32();
                    arc.add(NamedTensor::make_u32(name, dims, std::move(v)));
                    break;
                }
                default: {
                    std::vector<uint8_t> v(total);
                    for (auto& x : v) x = static_cast<uint8_t>(rng.next_below(256));
                    arc.add(NamedTensor::make_u8(name, dims, std::move(v)));
                    break;
                }
            }
        }
        std::string bytes = arc.serialize();
        auto back = NamedTensorArchive::deserialize(bytes);
        CHECK(back.serialize() == bytes);
        REQUIRE(back.count() == arc.count());
        for (const auto& t : arc.tensors()) {
            const auto& b = back.get(t.name);
            CHECK(b.dims == t.dims);
            CHECK(b.f32 == t.f32);
            CHECK(b.u32 == t.u32);
            CHECK(b.u8 == t.u8);
        }
    }
}

TEST_CASE("archive: duplicate name rejected") {
    NamedTensorArchive arc;
    arc.add(NamedTensor::make_f32("x", {2}, {1.0f, 2.0f}));
    CHECK_THROWS_WITH_AS(arc.add(NamedTensor::make_f32("x", {1}, {3.0f})),
                         doctest::Contains("duplicate"), std::runtime_error);
}

TEST_CASE("archive: bad magic and truncation rejected without partial result") {
    NamedTensorArchive arc;
    arc.add(NamedTensor::make_u32("idx", {4}, {1, 2, 3, 4}));
    std::string bytes = arc.serialize();

    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(NamedTensorArchive::deserialize(bad),
                         doctest::Contains("magic"), std::runtime_error);

    for (size_t cut : {bytes.size() - 1, bytes.size() - 9, size_t(6)})
        CHECK_THROWS_AS(NamedTensorArchive::deserialize(bytes.substr(0, cut)),
                        std::runtime_error);

    // Corrupted count field implies payload beyond the buffer.
    std::string corrupt = bytes;
    corrupt[4] = 9;
    CHECK_THROWS_AS(NamedTensorArchive::deserialize(corrupt), std::runtime_error);
}

TEST_CASE("archive: payload size must match dims") {
    NamedTensor t;
    t.name = "bad";
    t.dtype = Dtype::f32;
    t.dims = {3};
    t.f32 = {1.0f};
    CHECK_THROWS_AS(t.validate(), std::runtime_error);
}

TEST_CASE("pfm: round trip preserves floats and row order") {
    Pcg32 rng(7);
    UvImage img(5, 4, 3);
    for (auto& m : img.mask) m = 1;
    for (auto& v : img.data) v = static_cast<float>(rng.normal());
    auto path = temp_path("img.pfm");
    save_pfm(img, path);
    UvImage back = load_pfm(path);
    REQUIRE(back.height == 5);
    REQUIRE(back.width == 4);
    CHECK(back.data == img.data);
}

TEST_CASE("pgm: mask round trip") {
    Pcg32 rng(8);
    int h = 6, w = 9;
    std::vector<uint8_t> mask(h * w);
    for (auto& m : mask) m = static_cast<uint8_t>(rng.next_below(2));
    auto path = temp_path("mask.pgm");
    save_pgm(mask, h, w, path);
    int h2 = 0, w2 = 0;
    auto back = load_pgm(path, h2, w2);
    CHECK(h2 == h);
    CHECK(w2 == w);
    CHECK(back == mask);
}

TEST_CASE("png: zero image inside mask renders mid-gray") {
    UvImage img(3, 3, 3);
    for (auto& m : img.mask) m = 1;
    img.mask_at(0, 0) = 0;
    auto path = temp_path("gray.png");
    save_png(img, path);

    std::string bytes = read_file(path);
    REQUIRE(bytes.size() > 8);
    CHECK(bytes.substr(1, 3) == "PNG");
    // Decode by hand: single IDAT, inflate, check pixel bytes.
    // IHDR is 25 bytes after the 8-byte signature; IDAT data starts at 41.
    size_t idat_len = (uint8_t(bytes[33]) << 24) | (uint8_t(bytes[34]) << 16) |
                      (uint8_t(bytes[35]) << 8) | uint8_t(bytes[36]);
    REQUIRE(bytes.substr(37, 4) == "IDAT");
    std::string compressed = bytes.substr(41, idat_len);
    // Raw stream: 3 rows x (1 filter byte + 9 pixel bytes).
    uLongf raw_len = 3 * 10;
    std::string raw(raw_len, '\0');
    REQUIRE(uncompress(reinterpret_cast<Bytef*>(raw.data()), &raw_len,
                       reinterpret_cast<const Bytef*>(compressed.data()),
                       compressed.size()) == 0);
    CHECK(uint8_t(raw[0]) == 0);    // filter byte
    CHECK(uint8_t(raw[1]) == 0);    // masked-out pixel black
    CHECK(uint8_t(raw[4]) == 128);  // in-mask zero maps to 128
    CHECK(uint8_t(raw[10 + 1]) == 128);
}

TEST_CASE("image: validate flags nonzero background") {
    UvImage img(2, 2, 1);
    img.mask_at(0, 0) = 1;
    img.at(0, 1, 1) = 0.5f;
    CHECK_THROWS_AS(img.validate(), std::runtime_error);
    img.zero_background();
    img.validate();
    CHECK(img.at(0, 1, 1) == 0.0f);
}

TEST_CASE("atomic write leaves no temp file") {
    auto path = temp_path("atomic.bin");
    atomic_write_file(path, "payload");
    CHECK(read_file(path) == "payload");
    CHECK(!std::filesystem::exists(path + ".tmp"));
}

}  // TEST_SUITE

#include "drape/archive.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include "drape/io_util.hpp"

static_assert(std::endian::native == std::endian::little,
              "archive payload serialization assumes a little-endian host");

namespace drape {

namespace {

void append_raw(std::string& out, const void* p, size_t n) {
    out.append(reinterpret_cast<const char*>(p), n);
}

template <typename T>
void append_le(std::string& out, T v) {
    append_raw(out, &v, sizeof(T));
}

struct Reader {
    const std::string& bytes;
    size_t pos = 0;

    void read_raw(void* p, size_t n) {
        if (pos + n > bytes.size())
            throw std::runtime_error("archive: truncated (need " + std::to_string(n) +
                                     " bytes at offset " + std::to_string(pos) + ")");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    template <typename T>
    T read_le() {
        T v;
        read_raw(&v, sizeof(T));
        return v;
    }
};

size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::f32: return 4;
        case Dtype::u32: return 4;
        case Dtype::u8: return 1;
    }
    throw std::runtime_error("archive: unknown dtype code");
}

}  // namespace

void NamedTensor::validate() const {
    uint64_t n = element_count();
    size_t have = 0;
    switch (dtype) {
        case Dtype::f32: have = f32.size(); break;
        case Dtype::u32: have = u32.size(); break;
        case Dtype::u8: have = u8.size(); break;
    }
    if (have != n)
        throw std::runtime_error("archive: tensor '" + name + "' payload has " +
                                 std::to_string(have) + " elements, dims imply " +
                                 std::to_string(n));
}

NamedTensor NamedTensor::make_f32(std::string name, std::vector<uint64_t> dims,
                                  std::vector<float> data) {
    NamedTensor t;
    t.name = std::move(name);
    t.dtype = Dtype::f32;
    t.dims = std::move(dims);
    t.f32 = std::move(data);
    t.validate();
    return t;
}

NamedTensor NamedTensor::make_u32(std::string name, std::vector<uint64_t> dims,
                                  std::vector<uint32_t> data) {
    NamedTensor t;
    t.name = std::move(name);
    t.dtype = Dtype::u32;
    t.dims = std::move(dims);
    t.u32 = std::move(data);
    t.validate();
    return t;
}

NamedTensor NamedTensor::make_u8(std::string name, std::vector<uint64_t> dims,
                                 std::vector<uint8_t> data) {
    NamedTensor t;
    t.name = std::move(name);
    t.dtype = Dtype::u8;
    t.dims = std::move(dims);
    t.u8 = std::move(data);
    t.validate();
    return t;
}

void NamedTensorArchive::add(NamedTensor t) {
    t.validate();
    if (index_.count(t.name))
        throw std::runtime_error("archive: duplicate tensor name '" + t.name + "'");
    index_[t.name] = tensors_.size();
    tensors_.push_back(std::move(t));
}

const NamedTensor& NamedTensorArchive::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        throw std::runtime_error("archive: no tensor named '" + name + "'");
    return tensors_[it->second];
}

std::string NamedTensorArchive::serialize() const {
    std::string out;
    out.append("NTA1", 4);
    append_le<uint32_t>(out, static_cast<uint32_t>(tensors_.size()));
    for (const auto& t : tensors_) {
        t.validate();
        if (t.name.size() > 0xffff)
            throw std::runtime_error("archive: tensor name too long");
        append_le<uint16_t>(out, static_cast<uint16_t>(t.name.size()));
        out.append(t.name);
        append_le<uint8_t>(out, static_cast<uint8_t>(t.dtype));
        append_le<uint8_t>(out, static_cast<uint8_t>(t.dims.size()));
        for (uint64_t d : t.dims) append_le<uint64_t>(out, d);
        switch (t.dtype) {
            case Dtype::f32: append_raw(out, t.f32.data(), t.f32.size() * 4); break;
            case Dtype::u32: append_raw(out, t.u32.data(), t.u32.size() * 4); break;
            case Dtype::u8: append_raw(out, t.u8.data(), t.u8.size()); break;
        }
    }
    return out;
}

void NamedTensorArchive::save(const std::string& path) const {
    atomic_write_file(path, serialize());
}

NamedTensorArchive NamedTensorArchive::deserialize(const std::string& bytes) {
    Reader r{bytes};
    char magic[4];
    r.read_raw(magic, 4);
    if (std::memcmp(magic, "NTA1", 4) != 0)
        throw std::runtime_error("archive: bad magic");
    uint32_t count = r.read_le<uint32_t>();
    NamedTensorArchive arc;
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        uint16_t name_len = r.read_le<uint16_t>();
        t.name.resize(name_len);
        r.read_raw(t.name.data(), name_len);
        uint8_t dtype_code = r.read_le<uint8_t>();
        if (dtype_code > 2)
            throw std::runtime_error("archive: tensor '" + t.name + "' has unknown dtype " +
                                     std::to_string(dtype_code));
        t.dtype = static_cast<Dtype>(dtype_code);
        uint8_t ndim = r.read_le<uint8_t>();
        t.dims.resize(ndim);
        for (auto& d : t.dims) d = r.read_le<uint64_t>();
        uint64_t n = t.element_count();
        uint64_t payload = n * dtype_size(t.dtype);
        if (r.pos + payload > bytes.size())
            throw std::runtime_error("archive: truncated payload for tensor '" + t.name + "'");
        switch (t.dtype) {
            case Dtype::f32: t.f32.resize(n); r.read_raw(t.f32.data(), payload); break;
            case Dtype::u32: t.u32.resize(n); r.read_raw(t.u32.data(), payload); break;
            case Dtype::u8: t.u8.resize(n); r.read_raw(t.u8.data(), payload); break;
        }
        arc.add(std::move(t));
    }
    if (r.pos != bytes.size())
        throw std::runtime_error("archive: " + std::to_string(bytes.size() - r.pos) +
                                 " trailing bytes");
    return arc;
}

NamedTensorArchive NamedTensorArchive::load(const std::string& path) {
    try {
        return deserialize(read_file(path));
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " [" + path + "]");
    }
}

}  // namespace drape

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace drape {

enum class Dtype : uint8_t { f32 = 0, u32 = 1, u8 = 2 };

// One tensor in an archive. Exactly one of the payload vectors (matching
// dtype) is populated.
struct NamedTensor {
    std::string name;
    Dtype dtype = Dtype::f32;
    std::vector<uint64_t> dims;
    std::vector<float> f32;
    std::vector<uint32_t> u32;
    std::vector<uint8_t> u8;

    uint64_t element_count() const {
        uint64_t n = 1;
        for (uint64_t d : dims) n *= d;
        return dims.empty() ? 0 : n;
    }

    // Throws unless the populated payload matches dtype and dims.
    void validate() const;

    static NamedTensor make_f32(std::string name, std::vector<uint64_t> dims,
                                std::vector<float> data);
    static NamedTensor make_u32(std::string name, std::vector<uint64_t> dims,
                                std::vector<uint32_t> data);
    static NamedTensor make_u8(std::string name, std::vector<uint64_t> dims,
                               std::vector<uint8_t> data);
};

// Binary container: magic "NTA1", u32 LE count, then per tensor
// u16 name length + name bytes, u8 dtype, u8 ndim, ndim x u64 dims,
// raw little-endian payload. Names are unique; order is preserved.
class NamedTensorArchive {
public:
    void add(NamedTensor t);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const NamedTensor& get(const std::string& name) const;
    int count() const { return static_cast<int>(tensors_.size()); }
    const std::vector<NamedTensor>& tensors() const { return tensors_; }

    std::string serialize() const;
    void save(const std::string& path) const;  // atomic (temp + rename)

    static NamedTensorArchive deserialize(const std::string& bytes);
    static NamedTensorArchive load(const std::string& path);

private:
    std::vector<NamedTensor> tensors_;
    std::map<std::string, size_t> index_;
};

}  // namespace drape

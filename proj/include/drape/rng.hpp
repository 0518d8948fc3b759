#pragma once

#include <cmath>
#include <cstdint>

namespace drape {

// PCG32 (pcg_xsh_rr_64_32). Small state, cheap stream splitting, identical
// output on every platform. Streams are selected by the odd increment so a
// parent generator can hand out independent children keyed by an index.
class Pcg32 {
public:
    explicit Pcg32(uint64_t seed = 0x853c49e6748fea9bULL, uint64_t stream = 1) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // Unbiased integer in [0, bound).
    uint32_t next_below(uint32_t bound) {
        uint32_t threshold = (-bound) % bound;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform in [0, 1) with 32 bits of resolution.
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; one value per call, no cached spare so
    // the stream position is a pure function of the call count.
    double normal() {
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Child generator with an independent stream; deterministic in (this
    // generator's seed material, key).
    Pcg32 split(uint64_t key) const {
        uint64_t seed = state_ ^ (0x9e3779b97f4a7c15ULL * (key + 1));
        uint64_t stream = inc_ ^ (0xda942042e4dd58b5ULL * (key + 0x632be59bd9b4e019ULL));
        return Pcg32(seed, stream);
    }

private:
    uint64_t state_;
    uint64_t inc_;
};

}  // namespace drape
